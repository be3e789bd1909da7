"""Domain types and pure predicates for filter-based top-k monitoring.

Nodes are identified by ``0..n-1`` and time steps by ``0..T-1``.  Values are
naturals; filter endpoints are exact :class:`fractions.Fraction` values so that
the ``(1 - eps)`` scaled comparisons never suffer from rounding.  The upper
endpoint of an unbounded filter is :data:`INF`.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

Rat = Fraction
INF = math.inf
Bound = Union[Fraction, float]  # float only ever holds INF

__all__ = [
    "INF",
    "Rat",
    "Direction",
    "Filter",
    "FilterAssignment",
    "Neighborhood",
    "OutputSet",
    "StreamTrace",
    "as_rat",
    "detect_violations",
    "dump_trace",
    "format_rat",
    "is_valid_filter_set",
    "is_valid_output",
    "load_trace",
    "neighborhood",
    "neighborhood_at",
    "parse_rat",
    "rank_order",
    "top_k_ids",
    "window_min_max",
]


def as_rat(x: int | str | Fraction) -> Fraction:
    """Coerce ints, ``"p/q"`` strings and fractions to a canonical Fraction."""
    if isinstance(x, float):
        raise TypeError("floats are not accepted as exact rationals")
    return Fraction(x)


def format_rat(x: Bound) -> str:
    if x == INF:
        return "inf"
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def parse_rat(s: str) -> Bound:
    return INF if s == "inf" else Fraction(s)


class Direction(str, enum.Enum):
    """Direction of a filter violation.

    ``BELOW`` means the value rose above the filter's upper end (the node left
    its filter "from below"); ``ABOVE`` means it fell under the lower end.
    """

    BELOW = "below"
    ABOVE = "above"


# ---------------------------------------------------------------------------
# traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamTrace:
    """All observed values; ``rows[t][i]`` is node ``i``'s value at time ``t``."""

    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not self.rows:
            raise ValueError("a trace needs at least one time step")
        n = len(self.rows[0])
        if n < 1:
            raise ValueError("a trace needs at least one node")
        for t, row in enumerate(self.rows):
            if len(row) != n:
                raise ValueError(f"row {t} has {len(row)} values, expected {n}")
            for v in row:
                if not isinstance(v, (int, np.integer)) or v < 0:
                    raise ValueError(f"values must be naturals, got {v!r} at t={t}")

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[int]]) -> "StreamTrace":
        return cls(tuple(tuple(int(v) for v in row) for row in rows))

    @classmethod
    def from_matrix(cls, matrix) -> "StreamTrace":
        """Build from an ``n x T`` array (node-major, as ``v[i][t]``)."""
        arr = np.asarray(matrix)
        return cls.from_rows(arr.T.tolist())

    @property
    def n(self) -> int:
        return len(self.rows[0])

    @property
    def horizon(self) -> int:
        return len(self.rows)

    @property
    def delta(self) -> int:
        return max(max(row) for row in self.rows)

    @property
    def matrix(self) -> np.ndarray:
        """Node-major ``n x T`` int64 view."""
        return np.asarray(self.rows, dtype=np.int64).T

    def at(self, t: int) -> tuple[int, ...]:
        if not 0 <= t < self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon})")
        return self.rows[t]

    def window(self, t: int, t2: int) -> "StreamTrace":
        return StreamTrace(self.rows[t : t2 + 1])


def load_trace(path: str | Path) -> StreamTrace:
    """Read a trace from JSON lines or CSV (chosen by file suffix)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError("CSV trace header must start with 't'")
        items = [(int(r[0]), [int(x) for x in r[1:]]) for r in reader if r]
    else:
        items = []
        for line in text.splitlines():
            if line.strip():
                obj = json.loads(line)
                items.append((int(obj["t"]), [int(x) for x in obj["values"]]))
    items.sort(key=lambda it: it[0])
    times = [t for t, _ in items]
    if times != list(range(times[0], times[0] + len(times))):
        raise ValueError("trace time steps must be contiguous")
    return StreamTrace.from_rows(row for _, row in items)


def dump_trace(trace: StreamTrace, path: str | Path | None = None, fmt: str = "jsonl") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"v{i + 1}" for i in range(trace.n)])
        for t, row in enumerate(trace.rows):
            w.writerow([t, *row])
        text = buf.getvalue()
    elif fmt == "jsonl":
        text = "".join(
            json.dumps({"t": t, "values": list(row)}) + "\n" for t, row in enumerate(trace.rows)
        )
    else:
        raise ValueError(f"unknown trace format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


# ---------------------------------------------------------------------------
# filters and outputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Filter:
    lo: Fraction
    hi: Bound = INF
    # integer hull of [lo, hi]; values are naturals, so membership only needs these
    int_lo: int = field(init=False, repr=False, compare=False)
    int_hi: int | float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", Fraction(self.lo))
        if self.hi != INF:
            object.__setattr__(self, "hi", Fraction(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty filter [{self.lo}, {self.hi}]")
        object.__setattr__(self, "int_lo", math.ceil(self.lo))
        object.__setattr__(self, "int_hi", INF if self.hi == INF else math.floor(self.hi))

    def __contains__(self, v: int) -> bool:
        return self.int_lo <= v <= self.int_hi

    def to_json(self) -> list[str]:
        return [format_rat(self.lo), format_rat(self.hi)]


@dataclass(frozen=True)
class FilterAssignment:
    filters: tuple[Filter, ...]
    epsilon: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "epsilon", Fraction(self.epsilon))
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")

    def __len__(self) -> int:
        return len(self.filters)

    def __getitem__(self, i: int) -> Filter:
        return self.filters[i]


@dataclass(frozen=True)
class OutputSet:
    """A k-subset split into the forced part ``part_e`` and the free part ``part_a``."""

    members: frozenset[int]
    part_e: frozenset[int]
    part_a: frozenset[int]

    @classmethod
    def split(cls, members: Iterable[int], values: Sequence[int], k: int, eps: Fraction) -> "OutputSet":
        members = frozenset(members)
        nb = neighborhood_at(values, k, eps)
        part_e = members & nb.e_set
        return cls(members, part_e, members - part_e)

    @property
    def k(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Neighborhood:
    kth_node: int
    kth_value: int
    e_lo: Fraction
    a_lo: Fraction
    a_hi: Fraction
    k_set: frozenset[int]
    e_set: frozenset[int]

    @property
    def sigma_t(self) -> int:
        return len(self.k_set)


def rank_order(values: Sequence[int]) -> list[int]:
    """Node ids from largest to smallest value; equal values rank the smaller id first."""
    return sorted(range(len(values)), key=lambda i: (-values[i], i))


def top_k_ids(values: Sequence[int], k: int) -> frozenset[int]:
    return frozenset(rank_order(values)[:k])


def _check_eps(eps: Fraction) -> Fraction:
    eps = Fraction(eps)
    if not 0 <= eps < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {eps}")
    return eps


def neighborhood_at(values: Sequence[int], k: int, eps: Fraction) -> Neighborhood:
    """The E / A ranges around the k-th largest of ``values``.

    ``eps = 0`` is accepted and gives the exact-monitoring neighbourhood, where
    A collapses to the k-th value itself.
    """
    n = len(values)
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    eps = _check_eps(eps)
    kth = rank_order(values)[k - 1]
    vk = values[kth]
    a_lo = (1 - eps) * vk
    a_hi = Fraction(vk) / (1 - eps)
    # v >= (1-eps) vk  <=>  q v >= (q-p) vk ;  v <= vk / (1-eps)  <=>  (q-p) v <= q vk
    p, q = eps.numerator, eps.denominator
    lo_rhs, hi_rhs = (q - p) * vk, q * vk
    k_set = frozenset(i for i, v in enumerate(values) if q * v >= lo_rhs and (q - p) * v <= hi_rhs)
    e_set = frozenset(i for i, v in enumerate(values) if (q - p) * v > hi_rhs)
    return Neighborhood(kth, vk, a_hi, a_lo, a_hi, k_set, e_set)


def neighborhood(trace: StreamTrace, t: int, k: int, eps: Fraction) -> Neighborhood:
    return neighborhood_at(trace.at(t), k, eps)


def is_valid_output(
    values: Sequence[int], k: int, eps: Fraction, out: OutputSet | Iterable[int]
) -> bool:
    """Whether ``out`` is an admissible eps-top-k output for ``values``.

    A plain iterable of node ids is split into its E and A parts automatically.
    """
    if not isinstance(out, OutputSet):
        nb = neighborhood_at(values, k, eps)
        members = frozenset(out)
        part_e = members & nb.e_set
        out = OutputSet(members, part_e, members - part_e)
    else:
        nb = neighborhood_at(values, k, eps)
    if len(out.members) != k or out.part_e & out.part_a or out.part_e | out.part_a != out.members:
        return False
    return out.part_e == nb.e_set and out.part_a <= nb.k_set and len(out.part_a) == k - len(out.part_e)


def is_valid_filter_set(assign: FilterAssignment, out: Iterable[int], values: Sequence[int]) -> bool:
    members = frozenset(out)
    if len(assign) != len(values):
        return False
    if any(not f.int_lo <= v <= f.int_hi for v, f in zip(values, assign.filters)):
        return False
    inside = [assign[i].lo for i in members]
    outside = [assign[j].hi for j in range(len(values)) if j not in members]
    if not inside or not outside:
        return True
    return min(inside) >= (1 - assign.epsilon) * max(outside)


def window_min_max(trace: StreamTrace, nodes: Iterable[int], t: int, t2: int) -> tuple[int, int]:
    nodes = sorted(set(nodes))
    if not nodes:
        raise ValueError("window_min_max needs a nonempty node set")
    if not 0 <= t <= t2 < trace.horizon:
        raise ValueError(f"bad window [{t}, {t2}] for horizon {trace.horizon}")
    block = trace.matrix[nodes, t : t2 + 1]
    return int(block.min()), int(block.max())


def detect_violations(assign: FilterAssignment, values: Sequence[int]) -> list[tuple[int, Direction]]:
    out = []
    for i, (v, f) in enumerate(zip(values, assign.filters)):
        if v > f.int_hi:
            out.append((i, Direction.BELOW))
        elif v < f.int_lo:
            out.append((i, Direction.ABOVE))
    return out
