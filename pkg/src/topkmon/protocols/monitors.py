"""Top-level monitors: endless sequences of epochs, one generator per run."""

from __future__ import annotations

import warnings
from fractions import Fraction

from .dense import dense_epoch, half_eps_epoch
from .engine import OutcomeReason, Server
from .scattered import gap_test, midpoint_epoch, scattered_epoch

__all__ = ["MONITORS", "eps_topk_monitor", "half_eps_monitor", "midpoint_monitor", "scattered_monitor"]


def _require_eps(srv: Server) -> None:
    if not 0 < srv.eps < 1:
        raise ValueError(f"approximate monitoring needs 0 < eps < 1, got {srv.eps}")
    if srv.eps > Fraction(1, 2):
        warnings.warn(f"eps = {srv.eps} exceeds 1/2; bounds are only claimed up to 1/2", stacklevel=3)


def midpoint_monitor(srv: Server):
    """Exact top-k monitoring by arithmetic bisection."""
    while True:
        yield from midpoint_epoch(srv)


def scattered_monitor(srv: Server):
    """Approximate monitoring with the scattered protocol alone."""
    _require_eps(srv)
    while True:
        yield from scattered_epoch(srv)


def _dispatching(srv: Server, dense_like):
    _require_eps(srv)
    while True:
        rec = srv.open_epoch("?")
        top = srv.probe_top()
        if gap_test(top, srv.k, srv.eps):
            yield from scattered_epoch(srv, rec, top)
            continue
        outcome = yield from dense_like(srv, rec, top)
        if outcome.reason is OutcomeReason.HANDOFF_TO_SCATTERED:
            yield from scattered_epoch(srv)


def eps_topk_monitor(srv: Server):
    """Scattered when the k-th value stands clear of the (k+1)-st, dense otherwise."""
    yield from _dispatching(srv, dense_epoch)


def half_eps_monitor(srv: Server):
    """Like :func:`eps_topk_monitor` with the single-round dense variant."""
    yield from _dispatching(srv, half_eps_epoch)


MONITORS = {
    "midpoint": midpoint_monitor,
    "scattered": scattered_monitor,
    "eps_topk": eps_topk_monitor,
    "dense": eps_topk_monitor,
    "half_eps": half_eps_monitor,
}
