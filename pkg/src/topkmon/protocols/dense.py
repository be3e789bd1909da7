"""Monitoring when many values crowd around the k-th largest.

The dense protocol classifies nodes around a reference value ``z`` into a
sure-top class ``v1``, a sure-bottom class ``v3`` and the undecided ``v2``,
then bisects the guess interval ``L`` while undecided nodes drift.  Nodes seen
on both sides of the current bounds (``s1 & s2``) are resolved by the
sub-protocol, which bisects a second interval below the midpoint of ``L``.

Every report a node makes during an epoch is remembered (``seen_hi`` /
``seen_lo``).  Counting how many nodes were ever seen above ``u_r`` or below
``l_r`` gives the saturation tests that force halvings; since any offline
solution covering the whole epoch must put such a node on a fixed side, the
counts never need a reset.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..comms import Violation
from ..model import INF, Direction, Filter
from .engine import EpochRecord, OutcomeReason, Server
from .generic import GuessInterval

__all__ = [
    "DenseState",
    "SubOutcome",
    "SubResult",
    "dense_epoch",
    "half_eps_epoch",
    "pre_step",
    "sub_run",
]


class SubOutcome(str, enum.Enum):
    MOVE_TO_V1 = "move_to_v1"
    MOVE_TO_V3 = "move_to_v3"
    HALVE_LOWER = "halve_lower"
    HALVE_UPPER = "halve_upper"
    HANDOFF_TO_SCATTERED = "handoff_to_scattered"


@dataclass(frozen=True)
class SubResult:
    outcome: SubOutcome
    node: Optional[int] = None


@dataclass
class DenseState:
    n: int
    k: int
    eps: Fraction
    z: int
    v1: set[int]
    v2: set[int]
    v3: set[int]
    l: GuessInterval
    s1: set[int] = field(default_factory=set)
    s2: set[int] = field(default_factory=set)
    round: int = 0
    seen_hi: dict[int, int] = field(default_factory=dict)
    seen_lo: dict[int, int] = field(default_factory=dict)

    @property
    def ell_r(self) -> Fraction:
        return self.l.midpoint

    @property
    def u_r(self) -> Fraction:
        return self.ell_r / (1 - self.eps)

    @property
    def zhi(self) -> Fraction:
        return Fraction(self.z) / (1 - self.eps)

    @property
    def zlo(self) -> Fraction:
        return (1 - self.eps) * self.z

    def observe(self, i: int, v: int) -> None:
        self.seen_hi[i] = max(self.seen_hi.get(i, v), v)
        self.seen_lo[i] = min(self.seen_lo.get(i, v), v)

    def above(self, x) -> set[int]:
        """Nodes known to have held a value above ``x`` during the epoch."""
        return self.v1 | {i for i, v in self.seen_hi.items() if v > x}

    def below(self, x) -> set[int]:
        return self.v3 | {i for i, v in self.seen_lo.items() if v < x}

    def handoff_ready(self) -> bool:
        """Exactly k nodes were seen above ``u_r`` and the other n-k below ``l_r``."""
        hi, lo = self.above(self.u_r), self.below(self.ell_r)
        return len(hi) == self.k and len(lo) == self.n - self.k and hi.isdisjoint(lo)

    def move(self, i: int, dest: set[int]) -> None:
        self.v2.discard(i)
        self.s1.discard(i)
        self.s2.discard(i)
        dest.add(i)

    def fill(self, base: set[int], pool: set[int]) -> set[int]:
        """``base`` plus the lowest ids of ``pool`` up to k members."""
        need = self.k - len(base)
        if need < 0 or need > len(pool):
            raise AssertionError(f"cannot form an output from {len(base)} fixed and {len(pool)} free nodes")
        return base | set(sorted(pool)[:need])


def pre_step(srv: Server, top: list[tuple[int, int]]):
    """Hold ``[v_(k+1), inf]`` / ``[0, v_k]`` until a violation pins down ``z``.

    Returns ``(z, violation)``; the violation is ``None`` when the k-th and
    (k+1)-st values already coincide.
    """
    k = srv.k
    vk, vk1 = top[k - 1][1], top[k][1]
    if vk == vk1:
        return vk, None
    out = frozenset(i for i, _ in top[:k])
    srv.tag = f"{srv.current_epoch.kind}:pre"
    srv.broadcast("pre", lo=vk1, hi=vk)
    srv.publish([Filter(vk1, INF) if i in out else Filter(0, vk) for i in range(srv.n)], out)
    viol = yield
    z = vk if viol.direction is Direction.BELOW else vk1
    return z, viol


def _classify(srv: Server, lo_cut, hi_cut) -> tuple[set[int], set[int], set[int], dict[int, int]]:
    found = srv.probe_at_least(lo_cut)
    v1 = {i for i, v in found.items() if v > hi_cut}
    v2 = set(found) - v1
    v3 = set(range(srv.n)) - set(found)
    return v1, v2, v3, found


# -- dense --------------------------------------------------------------------


def _dense_filters(st: DenseState) -> tuple[list[Filter], set[int]]:
    ell, u, zhi, zlo = st.ell_r, st.u_r, st.zhi, st.zlo
    filters = []
    for i in range(st.n):
        if i in st.v1:
            filters.append(Filter(ell, INF))
        elif i in st.v3:
            filters.append(Filter(0, u))
        elif i in st.s1:
            filters.append(Filter(ell, zhi))
        elif i in st.s2:
            filters.append(Filter(zlo, u))
        else:
            filters.append(Filter(ell, u))
    out = st.fill(st.v1 | st.s1, st.v2 - st.s1 - st.s2)
    return filters, out


class _Dense:
    """Mutable bookkeeping of one dense epoch (state plus statistics)."""

    def __init__(self, srv: Server, rec: EpochRecord, st: DenseState):
        self.srv, self.rec, self.st = srv, rec, st
        self.viol_count: dict[int, int] = {}
        rec.stats.update(
            z=st.z,
            L0=st.l,
            interval=st.l,
            widths=[st.l.width],
            rounds=0,
            sub_calls=0,
            sub_outcomes=[],
            max_violations_per_round=0,
            v2_size=len(st.v2),
        )

    def _new_round(self) -> None:
        st, rec = self.st, self.rec
        st.round += 1
        rec.stats["rounds"] = st.round
        rec.stats["interval"] = st.l
        rec.stats["widths"].append(st.l.width)
        self.viol_count.clear()
        if not st.l.empty:
            self.srv.broadcast("round", r=st.round, interval=st.l)
        self.srv.emit("halve", interval=st.l)

    def halve_lower(self) -> None:
        self.st.l = self.st.l.lower_half()
        self.st.s2 = set()
        self._new_round()

    def halve_upper(self) -> None:
        self.st.l = self.st.l.upper_half()
        self.st.s1 = set()
        self._new_round()

    def normalize(self) -> None:
        """Halve while more than k nodes sit above ``u_r`` or more than n-k below ``l_r``."""
        st = self.st
        while not st.l.empty:
            if len(st.above(st.u_r)) > st.k:
                self.halve_upper()
            elif len(st.below(st.ell_r)) > st.n - st.k:
                self.halve_lower()
            else:
                return

    def apply(self, res: SubResult) -> bool:
        """Apply a sub-protocol result; ``True`` means hand off to scattered."""
        st, srv = self.st, self.srv
        self.rec.stats["sub_outcomes"].append(res.outcome.value)
        if res.outcome is SubOutcome.MOVE_TO_V1:
            if res.node in st.v2:
                st.move(res.node, st.v1)
                srv.unicast(res.node, "v1")
        elif res.outcome is SubOutcome.MOVE_TO_V3:
            if res.node in st.v2:
                st.move(res.node, st.v3)
                srv.unicast(res.node, "v3")
        elif res.outcome is SubOutcome.HALVE_LOWER:
            self.halve_lower()
        elif res.outcome is SubOutcome.HALVE_UPPER:
            self.halve_upper()
        else:
            return True
        return False

    def handle(self, viol: Violation) -> None:
        st, srv = self.st, self.srv
        i, below = viol.node, viol.direction is Direction.BELOW
        st.observe(i, viol.value)
        self.viol_count[i] = self.viol_count.get(i, 0) + 1
        stats = self.rec.stats
        stats["max_violations_per_round"] = max(stats["max_violations_per_round"], self.viol_count[i])
        if i in st.v1:
            self.halve_lower()
        elif i in st.v3:
            self.halve_upper()
        elif i in st.s1:
            if below:
                st.move(i, st.v1)
            else:
                st.s2.add(i)
            srv.unicast(i, "class")
        elif i in st.s2:
            if below:
                st.s1.add(i)
            else:
                st.move(i, st.v3)
            srv.unicast(i, "class")
        else:
            (st.s1 if below else st.s2).add(i)
            srv.unicast(i, "class")


def dense_epoch(srv: Server, rec: Optional[EpochRecord] = None, top=None):
    """One dense epoch; ends with an empty ``L`` or a hand-off to scattered."""
    if rec is None:
        rec = srv.open_epoch("dense")
    rec.kind = "dense"
    if top is None:
        top = srv.probe_top()
    srv.emit("dispatch", protocol="dense")
    z, viol = yield from pre_step(srv, top)
    eps = srv.eps
    st = DenseState(srv.n, srv.k, eps, z, set(), set(), set(),
                    GuessInterval(math.ceil((1 - eps) * z), z))
    if viol is not None:
        st.observe(viol.node, viol.value)
    st.v1, st.v2, st.v3, found = _classify(srv, st.zlo, st.zhi)
    for i, v in found.items():
        st.observe(i, v)
    srv.state = st
    d = _Dense(srv, rec, st)
    while True:
        d.normalize()
        if st.l.empty:
            return srv.close_epoch(rec, OutcomeReason.INTERVAL_EMPTY, st.l)
        if st.handoff_ready():
            return srv.close_epoch(rec, OutcomeReason.HANDOFF_TO_SCATTERED, st.l)
        both = st.s1 & st.s2
        if both:
            rec.stats["sub_calls"] += 1
            d.viol_count.clear()
            res = yield from sub_run(srv, st, min(both), rec)
            if d.apply(res):
                return srv.close_epoch(rec, OutcomeReason.HANDOFF_TO_SCATTERED, st.l)
            continue
        srv.tag = f"dense:r{st.round}"
        filters, out = _dense_filters(st)
        srv.publish(filters, out)
        viol = yield
        d.handle(viol)


# -- sub-protocol -------------------------------------------------------------


def _sub_filters(st: DenseState, s1p: set[int], s2p: set[int], ellp: Fraction, up: Fraction):
    ell, zhi, zlo = st.ell_r, st.zhi, st.zlo
    filters = []
    for i in range(st.n):
        if i in st.v1:
            filters.append(Filter(ell, INF))
        elif i in st.v3:
            filters.append(Filter(0, up))
        elif i in s1p and i in s2p:
            filters.append(Filter(ellp, zhi))
        elif i in s1p:
            filters.append(Filter(ell, zhi))
        elif i in s2p:
            filters.append(Filter(zlo, up))
        else:
            filters.append(Filter(ell, up))
    out = st.fill(st.v1 | s1p, st.v2 - s1p - s2p)
    return filters, out


def sub_run(srv: Server, st: DenseState, trigger: int, rec: Optional[EpochRecord] = None):
    """Resolve ``trigger``, a node seen both above ``u_r`` and below ``l_r``.

    Bisects ``L'`` (the part of ``L`` at or below ``l_r``) and returns a
    :class:`SubResult`: a node leaves ``v2`` for ``v1`` or ``v3``, the parent
    interval must be halved, or the split is settled and scattered takes over.
    Nodes that leave ``v2`` without ending the call are moved in ``st`` directly.
    """
    if trigger not in st.s1 or trigger not in st.s2:
        raise ValueError(f"trigger {trigger} is not in s1 & s2")
    n, k = st.n, st.k
    ell = st.ell_r
    entry = set(st.s1)
    lp = st.l.intersect(lo=st.zlo, hi=ell)
    s1p, s2p = set(entry), set()
    last_above: Optional[int] = None
    srv.broadcast("sub", trigger=trigger, interval=lp)
    srv.emit("sub_start", trigger=trigger, interval=lp)

    def done(outcome: SubOutcome, node: Optional[int] = None) -> SubResult:
        srv.emit("sub_end", outcome=outcome, node=node)
        return SubResult(outcome, node)

    def exhausted() -> SubResult:
        # no point of L' survives: the boundary lies above l_r
        for cand in (last_above, trigger):
            if cand is not None and cand in st.v2:
                return done(SubOutcome.MOVE_TO_V3, cand)
        return done(SubOutcome.HALVE_UPPER)

    while True:
        if lp.empty:
            return exhausted()
        ellp = lp.midpoint
        up = ellp / (1 - st.eps)
        if len(st.above(up)) > k:
            lp = lp.upper_half()
            s1p = entry & st.v2
            srv.broadcast("sub_round", interval=lp)
            continue
        if len(st.below(ell)) > n - k:
            return done(SubOutcome.HALVE_LOWER)
        if st.handoff_ready():
            return done(SubOutcome.HANDOFF_TO_SCATTERED)
        srv.tag = f"dense:r{st.round}:sub"
        filters, out = _sub_filters(st, s1p, s2p, ellp, up)
        srv.publish(filters, out)
        viol = yield
        i, below = viol.node, viol.direction is Direction.BELOW
        st.observe(i, viol.value)
        if i in st.v1:
            return done(SubOutcome.HALVE_LOWER)
        if i in st.v3:
            lp = lp.upper_half()
            s1p = entry & st.v2
            srv.broadcast("sub_round", interval=lp)
            continue
        in1, in2 = i in s1p, i in s2p
        if in1 and in2:
            if below:
                return done(SubOutcome.MOVE_TO_V1, i)
            lp = lp.lower_half()
            s2p = set()
            last_above = i
            srv.broadcast("sub_round", interval=lp)
            if lp.empty:
                return done(SubOutcome.MOVE_TO_V3, i)
        elif in1:
            if below:
                st.move(i, st.v1)
                s1p.discard(i)
                srv.unicast(i, "v1")
                if i == trigger:
                    return done(SubOutcome.MOVE_TO_V1, i)
            else:
                s2p.add(i)
                srv.unicast(i, "class")
        elif in2:
            if below:
                s1p.add(i)
                srv.unicast(i, "class")
            else:
                st.move(i, st.v3)
                s2p.discard(i)
                srv.unicast(i, "v3")
                if i == trigger:
                    return done(SubOutcome.MOVE_TO_V3, i)
        else:
            (s1p if below else s2p).add(i)
            srv.unicast(i, "class")


# -- half-eps variant ---------------------------------------------------------


def half_eps_epoch(srv: Server, rec: Optional[EpochRecord] = None, top=None):
    """Single simulated dense round with bounds widened to ``(1 - eps/2) z``.

    Undecided nodes are classified by their first violation; any violation by
    a decided node, or running out of room for a k-subset, ends the epoch.
    """
    if rec is None:
        rec = srv.open_epoch("half_eps")
    rec.kind = "half_eps"
    if top is None:
        top = srv.probe_top()
    srv.emit("dispatch", protocol="half_eps")
    z, _ = yield from pre_step(srv, top)
    n, k, eps = srv.n, srv.k, srv.eps
    c = (1 - eps / 2) * z
    cap = c / (1 - eps)
    v1, v2, v3, _found = _classify(srv, c, cap)
    rec.stats.update(z=z, v2_size=len(v2), moves=0, interval=GuessInterval(math.ceil(c), z))
    empty = GuessInterval.empty_interval()
    while True:
        if len(v1) > k or len(v1) + len(v2) < k:
            return srv.close_epoch(rec, OutcomeReason.INTERVAL_EMPTY, empty)
        if len(v1) == k and len(v3) == n - k:
            return srv.close_epoch(rec, OutcomeReason.HANDOFF_TO_SCATTERED, rec.stats["interval"])
        filters = [
            Filter(c, INF) if i in v1 else Filter(c, cap) if i in v2 else Filter(0, cap)
            for i in range(n)
        ]
        out = v1 | set(sorted(v2)[: k - len(v1)])
        srv.tag = "half_eps"
        srv.publish(filters, out)
        viol = yield
        i = viol.node
        if i not in v2:
            return srv.close_epoch(rec, OutcomeReason.INTERVAL_EMPTY, empty)
        v2.discard(i)
        (v1 if viol.direction is Direction.BELOW else v3).add(i)
        rec.stats["moves"] += 1
        srv.unicast(i, "class")
