"""Offline-optimal filter schedules.

An offline algorithm that knows the whole trace only has to reconfigure when
no single pair of filters (``[lo, inf]`` for its k output nodes, ``[0, hi]``
for the rest) stays valid any longer.  A window ``[t, t2]`` admits such a pair
iff some k-set S has ``min_S >= (1 - eps) * max_rest`` over the window.
Feasibility is hereditary on sub-windows, so greedily extending each segment
as far as possible gives the minimum number of segments.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .model import INF, Filter, StreamTrace, format_rat, rank_order

__all__ = [
    "OptSchedule",
    "Segment",
    "feasible_exact",
    "feasible_segment",
    "opt_brute",
    "opt_communicated",
    "opt_exact",
    "opt_greedy",
]

BRUTE_MAX_N = 6
BRUTE_MAX_T = 12


@dataclass(frozen=True)
class Segment:
    t_from: int
    t_to: int
    output: frozenset[int]
    f1: Filter
    f2: Filter

    def to_dict(self) -> dict:
        return {
            "t_from": self.t_from,
            "t_to": self.t_to,
            "output": sorted(self.output),
            "f1": self.f1.to_json(),
            "f2": self.f2.to_json(),
        }


@dataclass(frozen=True)
class OptSchedule:
    segments: tuple[Segment, ...]
    n: int
    k: int
    eps: Optional[Fraction]  # None for the exact oracle

    @property
    def reconfig_events(self) -> int:
        return len(self.segments)

    @property
    def detailed_cost(self) -> int:
        """k unicasts (or n-k, whichever side is smaller) plus one broadcast per segment."""
        return len(self.segments) * (min(self.k, self.n - self.k) + 1)

    def reconfigs_in(self, t: int, t2: int) -> int:
        """Segment starts strictly inside ``(t, t2]``, i.e. forced changes within the window."""
        return sum(1 for s in self.segments if t < s.t_from <= t2)

    def to_dict(self) -> dict:
        return {
            "eps": None if self.eps is None else format_rat(self.eps),
            "reconfig_events": self.reconfig_events,
            "detailed_cost": self.detailed_cost,
            "segments": [s.to_dict() for s in self.segments],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_k(n: int, k: int) -> None:
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")


def _fits_int64(*arrays: np.ndarray, scale: int) -> bool:
    return max(int(a.max()) for a in arrays) * scale < 2**62


def _pick(mins: np.ndarray, maxs: np.ndarray, k: int, eps: Fraction) -> Optional[frozenset[int]]:
    """A feasible k-set for per-node window minima/maxima, or ``None``.

    For every candidate threshold ``theta`` (one of the minima): nodes whose
    scaled maximum exceeds ``theta`` must be in S, and only nodes whose
    minimum reaches ``theta`` may be.
    """
    p, q = eps.numerator, eps.denominator
    dtype = np.int64 if _fits_int64(mins, maxs, scale=q) else object
    lhs = (q - p) * maxs.astype(dtype)  # q (1 - eps) M_j
    theta = q * mins.astype(dtype)
    must = lhs[None, :] > theta[:, None]  # rows: threshold index, cols: node
    cand = mins[None, :] >= mins[:, None]
    ok = (~must | cand).all(axis=1)
    n_must = must.sum(axis=1)
    n_cand = cand.sum(axis=1)
    ok &= (n_must <= k) & (n_cand >= k)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    row = int(hits[0])
    chosen = set(np.flatnonzero(must[row]).tolist())
    rest = [i for i in np.flatnonzero(cand[row]).tolist() if i not in chosen]
    rest.sort(key=lambda i: (-int(mins[i]), i))
    chosen.update(rest[: k - len(chosen)])
    return frozenset(chosen)


def _window(trace: StreamTrace, t: int, t2: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 <= t <= t2 < trace.horizon:
        raise ValueError(f"bad window [{t}, {t2}] for horizon {trace.horizon}")
    block = trace.matrix[:, t : t2 + 1]
    return block.min(axis=1), block.max(axis=1)


def _segment(trace: StreamTrace, t: int, t2: int, s: frozenset[int], mins, maxs) -> Segment:
    rest = [j for j in range(trace.n) if j not in s]
    return Segment(t, t2, s, Filter(int(min(mins[i] for i in s)), INF), Filter(0, int(max(maxs[j] for j in rest))))


def feasible_segment(trace: StreamTrace, k: int, eps, t: int, t2: int) -> Optional[Segment]:
    """One output set and filter pair valid throughout ``[t, t2]``, if any exists."""
    _check_k(trace.n, k)
    eps = Fraction(eps)
    mins, maxs = _window(trace, t, t2)
    s = _pick(mins, maxs, k, eps)
    return None if s is None else _segment(trace, t, t2, s, mins, maxs)


def _exact_pick(first: tuple[int, ...], mins, maxs, k: int) -> Optional[frozenset[int]]:
    """The id-tie-broken top k at the window start, if it outranks the rest throughout."""
    s = rank_order(first)[:k]
    rest = [j for j in range(len(first)) if j not in s]
    worst_in = min((int(mins[i]), -i) for i in s)
    best_out = max((int(maxs[j]), -j) for j in rest)
    return frozenset(s) if worst_in > best_out else None


def feasible_exact(trace: StreamTrace, k: int, t: int, t2: int) -> Optional[Segment]:
    """Exact-monitoring feasibility: same top k (ties by id) at every step of the window."""
    _check_k(trace.n, k)
    mins, maxs = _window(trace, t, t2)
    s = _exact_pick(trace.at(t), mins, maxs, k)
    return None if s is None else _segment(trace, t, t2, s, mins, maxs)


def opt_communicated(trace: StreamTrace, k: int, eps, t: int, t2: int) -> bool:
    """Whether every offline algorithm must reconfigure within ``[t, t2]``.

    ``eps=None`` selects the exact oracle.
    """
    if eps is None:
        return feasible_exact(trace, k, t, t2) is None
    return feasible_segment(trace, k, eps, t, t2) is None


def opt_greedy(trace: StreamTrace, k: int, eps, exact: bool = False) -> OptSchedule:
    """Minimum segmentation by longest feasible extension.

    Growing the window one step at a time is equivalent to the binary search
    over the end point (feasibility is hereditary) and reuses the running
    minima and maxima.
    """
    n, horizon = trace.n, trace.horizon
    _check_k(n, k)
    eps_r = None if exact else Fraction(eps)
    mat = trace.matrix
    segments = []
    t = 0
    while t < horizon:
        mins = mat[:, t].copy()
        maxs = mat[:, t].copy()
        first = trace.at(t)
        pick = (lambda a, b: _exact_pick(first, a, b, k)) if exact else (lambda a, b: _pick(a, b, k, eps_r))
        s = pick(mins, maxs)
        if s is None:  # cannot happen for a single step
            raise AssertionError(f"no feasible output at t={t}")
        t2 = t
        while t2 + 1 < horizon:
            nm = np.minimum(mins, mat[:, t2 + 1])
            nx = np.maximum(maxs, mat[:, t2 + 1])
            s2 = pick(nm, nx)
            if s2 is None:
                break
            mins, maxs, s, t2 = nm, nx, s2, t2 + 1
        segments.append(_segment(trace, t, t2, s, mins, maxs))
        t = t2 + 1
    return OptSchedule(tuple(segments), n, k, eps_r)


def opt_exact(trace: StreamTrace, k: int) -> OptSchedule:
    return opt_greedy(trace, k, None, exact=True)


def _brute_feasible(trace: StreamTrace, k: int, eps: Optional[Fraction], t: int, t2: int):
    mins, maxs = _window(trace, t, t2)
    n = trace.n
    for s in itertools.combinations(range(n), k):
        rest = [j for j in range(n) if j not in s]
        if eps is None:
            # every member outranks every non-member at every pair of times
            ok = min((int(mins[i]), -i) for i in s) > max((int(maxs[j]), -j) for j in rest)
        else:
            ok = min(int(mins[i]) for i in s) >= (1 - eps) * max(int(maxs[j]) for j in rest)
        if ok:
            return frozenset(s), mins, maxs
    return None


def opt_brute(trace: StreamTrace, k: int, eps, exact: bool = False) -> OptSchedule:
    """Minimum segmentation by dynamic programming over all windows and all k-sets."""
    n, horizon = trace.n, trace.horizon
    _check_k(n, k)
    if n > BRUTE_MAX_N or horizon > BRUTE_MAX_T:
        raise ValueError(f"brute force limited to n <= {BRUTE_MAX_N}, T <= {BRUTE_MAX_T}")
    eps_r = None if exact else Fraction(eps)
    best = [0] + [None] * horizon  # best[j]: fewest segments covering steps 0..j-1
    choice: list[Optional[tuple[int, tuple]]] = [None] * (horizon + 1)
    for j in range(1, horizon + 1):
        for i in range(j):
            if best[i] is None or (best[j] is not None and best[i] + 1 >= best[j]):
                continue
            found = _brute_feasible(trace, k, eps_r, i, j - 1)
            if found is not None:
                best[j] = best[i] + 1
                choice[j] = (i, found)
    segments = []
    j = horizon
    while j > 0:
        i, (s, mins, maxs) = choice[j]
        segments.append(_segment(trace, i, j - 1, s, mins, maxs))
        j = i
    return OptSchedule(tuple(reversed(segments)), n, k, eps_r)
