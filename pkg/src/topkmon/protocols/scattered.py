"""Certificate-based monitoring: exact midpoint search and the scattered protocol.

Both keep a fixed output set ``out`` (the top k at epoch start) and a guess
interval ``L`` for the lowest value any offline single-filter-set solution
could give the output nodes.  Every round publishes one certificate ``m``:
output nodes get ``[m, inf]``, everyone else ``[0, m]``.  A violation shrinks
``L``; when ``L`` is empty the epoch ends.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Iterable, Optional

from ..model import INF, Filter
from .engine import EpochRecord, OutcomeReason, ProtocolOutcome, Server
from .generic import GuessInterval, Phase, generic_round, phase_condition

__all__ = [
    "a1_certificate",
    "a2_certificate",
    "a3_certificate",
    "certificate_filters",
    "gap_test",
    "midpoint_epoch",
    "run_a1",
    "run_a2",
    "run_a3",
    "run_step5",
    "scattered_epoch",
]


def certificate_filters(n: int, out: Iterable[int], lo, hi) -> list[Filter]:
    """Output nodes get ``[lo, inf]``, the rest ``[0, hi]``."""
    out = set(out)
    upper, lower = Filter(lo, INF), Filter(0, hi)
    return [upper if i in out else lower for i in range(n)]


def a1_certificate(l: GuessInterval, base: int, r: int) -> int:
    """``base + 2**(2**r)`` clamped into ``l``.

    Once ``2**r`` exceeds the bit length of ``l.hi`` the power overshoots any
    value in ``l``, so it is never materialised.
    """
    if 2**r > l.hi.bit_length():
        return l.hi
    return min(max(base + 2 ** (2**r), l.lo), l.hi)


def a2_certificate(l: GuessInterval) -> int:
    """Integer geometric mean of the endpoints (clamped into ``l``)."""
    return min(max(math.isqrt(l.lo * l.hi), l.lo), l.hi)


def a3_certificate(l: GuessInterval) -> int:
    return (l.lo + l.hi) // 2


def _certificate_rounds(
    srv: Server,
    rec: EpochRecord,
    l: GuessInterval,
    out: frozenset[int],
    choose: Callable[[GuessInterval, int], int],
    keep_going: Callable[[GuessInterval], bool],
    label: str,
):
    """Shared round loop: publish ``m``, wait for a violation, shrink ``l``."""
    r = 0
    while not l.empty and keep_going(l):
        m = choose(l, r)
        srv.tag = f"{rec.kind}:{label}"
        srv.broadcast("certificate", m=m, phase=label)
        srv.publish(certificate_filters(srv.n, out, m, m), out)
        viol = yield
        l = generic_round(l, m, viol)
        rec.stats["rounds"][label] = rec.stats["rounds"].get(label, 0) + 1
        rec.stats["interval"] = l
        srv.emit("halve", interval=l, phase=label)
        r += 1
    return l


def run_a1(srv: Server, rec: EpochRecord, l: GuessInterval, out: frozenset[int]):
    """Doubly-exponential probing above the initial lower end while P1 holds."""
    if phase_condition(l, srv.eps) is not Phase.P1:
        raise ValueError(f"A1 needs P1, got {phase_condition(l, srv.eps)} for {l}")
    base = l.lo
    return (
        yield from _certificate_rounds(
            srv, rec, l, out,
            lambda cur, r: a1_certificate(cur, base, r),
            lambda cur: phase_condition(cur, srv.eps) is Phase.P1,
            "P1",
        )
    )


def run_a2(srv: Server, rec: EpochRecord, l: GuessInterval, out: frozenset[int]):
    """Geometric bisection while P2 holds."""
    if phase_condition(l, srv.eps) is not Phase.P2:
        raise ValueError(f"A2 needs P2, got {phase_condition(l, srv.eps)} for {l}")
    return (
        yield from _certificate_rounds(
            srv, rec, l, out,
            lambda cur, r: a2_certificate(cur),
            lambda cur: phase_condition(cur, srv.eps) is Phase.P2,
            "P2",
        )
    )


def run_a3(srv: Server, rec: EpochRecord, l: GuessInterval, out: frozenset[int]):
    """Arithmetic bisection while P3 holds."""
    if phase_condition(l, srv.eps) is not Phase.P3:
        raise ValueError(f"A3 needs P3, got {phase_condition(l, srv.eps)} for {l}")
    return (
        yield from _certificate_rounds(
            srv, rec, l, out,
            lambda cur, r: a3_certificate(cur),
            lambda cur: phase_condition(cur, srv.eps) is Phase.P3,
            "P3",
        )
    )


def run_step5(srv: Server, rec: EpochRecord, l: GuessInterval, out: frozenset[int]):
    """Once ``u <= l/(1-eps)`` the pair ``[l, inf]`` / ``[0, u]`` is already valid.

    Any violation of it contradicts every point of ``L``.
    """
    srv.tag = f"{rec.kind}:P4"
    srv.broadcast("bounds", lo=l.lo, hi=l.hi)
    srv.publish(certificate_filters(srv.n, out, l.lo, l.hi), out)
    viol = yield
    l = generic_round(l, l.lo, viol)
    rec.stats["rounds"]["P4"] = rec.stats["rounds"].get("P4", 0) + 1
    rec.stats["interval"] = l
    return l


_RUNNERS = {Phase.P1: run_a1, Phase.P2: run_a2, Phase.P3: run_a3, Phase.P4: run_step5}


def _open(srv: Server, rec: Optional[EpochRecord], kind: str, top) -> tuple[EpochRecord, list]:
    if rec is None:
        rec = srv.open_epoch(kind)
    rec.kind = kind
    if top is None:
        top = srv.probe_top()
    return rec, top


def scattered_epoch(srv: Server, rec: Optional[EpochRecord] = None, top=None):
    """One scattered epoch; returns its :class:`ProtocolOutcome` when ``L`` empties."""
    rec, top = _open(srv, rec, "scattered", top)
    k = srv.k
    out = frozenset(i for i, _ in top[:k])
    l = GuessInterval(top[k][1], top[k - 1][1])
    rec.stats.update(rounds={}, interval=l, L0=l, phases=[])
    srv.emit("dispatch", protocol="scattered", interval=l)
    while not l.empty:
        tag = phase_condition(l, srv.eps)
        rec.stats["phases"].append(tag.value)
        l = yield from _RUNNERS[tag](srv, rec, l, out)
    return srv.close_epoch(rec, OutcomeReason.INTERVAL_EMPTY, l)


def midpoint_epoch(srv: Server, rec: Optional[EpochRecord] = None, top=None) -> ProtocolOutcome:
    """Exact monitoring: arithmetic bisection of ``[v_(k+1), v_k]`` until empty."""
    rec, top = _open(srv, rec, "midpoint", top)
    k = srv.k
    out = frozenset(i for i, _ in top[:k])
    l = GuessInterval(top[k][1], top[k - 1][1])
    rec.stats.update(rounds={}, interval=l, L0=l, widths=[l.width])
    srv.emit("dispatch", protocol="midpoint", interval=l)
    r = 0
    while not l.empty:
        m = a3_certificate(l)
        srv.tag = "midpoint"
        srv.broadcast("certificate", m=m)
        srv.publish(certificate_filters(srv.n, out, m, m), out)
        viol = yield
        l = generic_round(l, m, viol)
        r += 1
        rec.stats["rounds"]["mid"] = r
        rec.stats["interval"] = l
        rec.stats["widths"].append(l.width)
    return srv.close_epoch(rec, OutcomeReason.INTERVAL_EMPTY, l)


def gap_test(top: list[tuple[int, int]], k: int, eps: Fraction) -> bool:
    """Whether the (k+1)-st value lies clearly below the k-th."""
    return top[k][1] < (1 - eps) * top[k - 1][1]
