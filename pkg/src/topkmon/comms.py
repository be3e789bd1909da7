"""Simulated server/node communication and the randomized primitives.

Every primitive charges a :class:`MessageLedger`.  Uplink messages are node to
server, downlink unicasts are server to one node, broadcasts reach every node
for unit cost.  Rounds are counted but free.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import Direction, FilterAssignment, Filter

__all__ = [
    "MessageLedger",
    "StepCounts",
    "Violation",
    "existence_protocol",
    "existence_senders",
    "find_max",
    "report_violations",
    "rng_stream",
    "top_k_plus_one",
]


def rng_stream(seed: int, *keys: int | str) -> np.random.Generator:
    """A reproducible generator for ``seed`` and a tuple of stream names.

    String keys are mapped through crc32 so that names stay stable across
    interpreter runs (``hash`` is salted).
    """
    spawn_key = tuple(k if isinstance(k, int) else zlib.crc32(k.encode()) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn_key))


@dataclass
class StepCounts:
    uplink: int = 0
    downlink_unicast: int = 0
    broadcast: int = 0
    rounds: int = 0

    @property
    def messages(self) -> int:
        return self.uplink + self.downlink_unicast + self.broadcast

    def __add__(self, other: "StepCounts") -> "StepCounts":
        return StepCounts(
            self.uplink + other.uplink,
            self.downlink_unicast + other.downlink_unicast,
            self.broadcast + other.broadcast,
            self.rounds + other.rounds,
        )

    def __sub__(self, other: "StepCounts") -> "StepCounts":
        return StepCounts(
            self.uplink - other.uplink,
            self.downlink_unicast - other.downlink_unicast,
            self.broadcast - other.broadcast,
            self.rounds - other.rounds,
        )


class MessageLedger:
    """Running message totals with a per-time-step breakdown."""

    def __init__(self) -> None:
        self.total = StepCounts()
        self.per_step: dict[int, StepCounts] = {}
        self.t = 0

    def at(self, t: int) -> None:
        if t < self.t:
            raise ValueError("ledger time cannot move backwards")
        self.t = t

    def _charge(self, attr: str, count: int) -> None:
        if count < 0:
            raise ValueError("message counts are non-negative")
        if count:
            step = self.per_step.setdefault(self.t, StepCounts())
            setattr(step, attr, getattr(step, attr) + count)
            setattr(self.total, attr, getattr(self.total, attr) + count)

    def uplink(self, count: int = 1) -> None:
        self._charge("uplink", count)

    def downlink(self, count: int = 1) -> None:
        self._charge("downlink_unicast", count)

    def broadcast(self, count: int = 1) -> None:
        self._charge("broadcast", count)

    def rounds(self, count: int = 1) -> None:
        self._charge("rounds", count)

    def snapshot(self) -> StepCounts:
        return StepCounts(**asdict(self.total))

    @property
    def messages(self) -> int:
        return self.total.messages

    def is_conserved(self) -> bool:
        acc = StepCounts()
        for c in self.per_step.values():
            acc = acc + c
        return acc == self.total

    def to_dict(self) -> dict:
        d = asdict(self.total)
        d["per_step"] = [{"t": t, **asdict(c)} for t, c in sorted(self.per_step.items())]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass(frozen=True)
class Violation:
    node: int
    direction: Direction
    value: int


def _gamma(n: int) -> int:
    return max(0, (n - 1).bit_length())  # ceil(log2 n)


def existence_senders(
    active: Sequence[int] | np.ndarray, n: int, rng: np.random.Generator, ledger: MessageLedger
) -> np.ndarray:
    """Run the randomized existence rounds over the nodes holding a 1.

    ``n`` is the number of participating nodes (it fixes the sending
    probabilities ``min(1, 2^r / n)``); ``active`` lists those whose bit is 1.
    Returns the ids that sent in the terminating round, empty iff no node is
    active.  Every sent message is charged as uplink.
    """
    if n < 1:
        raise ValueError("existence protocol needs n >= 1")
    active = np.asarray(active, dtype=np.int64)
    gamma = _gamma(n)
    for r in range(gamma + 1):
        ledger.rounds()
        if active.size == 0:
            continue
        p = 1.0 if r == gamma else min(1.0, 2.0**r / n)
        sent = active[rng.random(active.size) < p]
        if sent.size:
            ledger.uplink(int(sent.size))
            return sent
    return active[:0]


def existence_protocol(bits: Sequence[int], rng: np.random.Generator, ledger: MessageLedger) -> bool:
    """Decide the OR of the nodes' bits; always correct, O(1) expected messages."""
    active = np.flatnonzero(np.asarray(bits, dtype=np.int64))
    return existence_senders(active, len(bits), rng, ledger).size > 0


def report_violations(
    assign: FilterAssignment | Sequence[Filter],
    values: Sequence[int],
    rng: np.random.Generator,
    ledger: MessageLedger,
) -> Optional[Violation]:
    """Find some filter violation, or ``None`` when every node is inside its filter.

    Violating nodes run the existence rounds; each sender of the terminating
    round ships its id, direction and value in that one message.  The server
    keeps the lowest-id sender; the others are re-detected later if still
    relevant.
    """
    filters = assign.filters if isinstance(assign, FilterAssignment) else assign
    bad = [i for i, (v, f) in enumerate(zip(values, filters)) if v > f.int_hi or v < f.int_lo]
    senders = existence_senders(bad, len(values), rng, ledger)
    if senders.size == 0:
        return None
    i = int(senders.min())
    v = values[i]
    return Violation(i, Direction.BELOW if v > filters[i].int_hi else Direction.ABOVE, v)


def find_max(
    values: Sequence[int],
    candidates: Iterable[int],
    rng: np.random.Generator,
    ledger: MessageLedger,
) -> tuple[int, int]:
    """Candidate holding the largest value (smaller id wins ties).

    Champion raising: the server broadcasts the current champion and every
    candidate ranking above it joins an existence round; the best-ranked
    sender becomes the new champion.  Stops when nobody ranks above.
    """
    cand = np.asarray(sorted(set(candidates)), dtype=np.int64)
    if cand.size == 0:
        raise ValueError("find_max needs a nonempty candidate set")
    # rank key: value first, then the smaller id; one scalar per node
    span = len(values) + 1
    big = max(int(values[i]) for i in cand) * span + span >= 2**62
    keys = np.asarray(
        [int(values[i]) * span + (span - 1 - int(i)) for i in cand],
        dtype=object if big else np.int64,
    )
    above = np.ones(cand.size, dtype=bool)
    champ = -1
    while True:
        ledger.broadcast()
        senders = existence_senders(cand[above], cand.size, rng, ledger)
        if senders.size == 0:
            return champ, int(values[champ])
        pos = np.searchsorted(cand, senders)
        best = pos[np.argmax(keys[pos])] if not big else max(pos, key=lambda p: keys[p])
        champ = int(cand[best])
        above = keys > keys[best]


def top_k_plus_one(
    values: Sequence[int], k: int, rng: np.random.Generator, ledger: MessageLedger
) -> list[tuple[int, int]]:
    """The ``k + 1`` best-ranked ``(node, value)`` pairs, best first."""
    n = len(values)
    if not 0 <= k < n:
        raise ValueError(f"need k + 1 <= n, got k={k}, n={n}")
    remaining = set(range(n))
    out = []
    for _ in range(k + 1):
        node, v = find_max(values, remaining, rng, ledger)
        out.append((node, v))
        remaining.discard(node)
    return out
