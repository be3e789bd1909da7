"""Value sources for simulations: adaptive adversaries, stochastic workloads, replay.

Every source exposes ``next_values(view)``, called once per time step before
the protocol exchange of that step.  ``view`` is the server state published
at the end of the previous step (filters, output, time, protocol tag).
"""

from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .comms import rng_stream
from .model import StreamTrace, dump_trace
from .protocols.engine import ServerView

__all__ = [
    "AdaptiveAdversary",
    "LowerBoundAdversary",
    "STOCHASTIC_KINDS",
    "StochasticAdversary",
    "TraceReplay",
    "lower_bound_adversary",
    "stochastic_generator",
]


class AdaptiveAdversary:
    """Base class; subclasses implement :meth:`_next`."""

    n: int
    delta: int
    horizon: Optional[int] = None

    def __init__(self, n: int, delta: int):
        if n < 1 or delta < 0:
            raise ValueError("need n >= 1 and delta >= 0")
        self.n, self.delta = n, delta
        self.produced: list[tuple[int, ...]] = []

    def next_values(self, view: Optional[ServerView] = None) -> tuple[int, ...]:
        vals = tuple(int(v) for v in self._next(view))
        if len(vals) != self.n or any(not 0 <= v <= self.delta for v in vals):
            raise AssertionError(f"adversary produced out-of-range values {vals}")
        self.produced.append(vals)
        return vals

    def _next(self, view: Optional[ServerView]) -> Sequence[int]:
        raise NotImplementedError

    def trace(self) -> StreamTrace:
        return StreamTrace.from_rows(self.produced)

    def dump(self, path: str | Path | None = None, fmt: str = "jsonl") -> str:
        return dump_trace(self.trace(), path, fmt)


class LowerBoundAdversary(AdaptiveAdversary):
    """Drops one node at a time out of every filter that excludes the low value.

    All ``sigma`` leading nodes start at ``y0``.  Each step one node still at
    ``y0`` whose published lower filter end exceeds ``y1`` falls to ``y1``;
    after ``sigma - k`` drops every node returns to ``y0`` and a new phase
    begins.  The remaining ``n - sigma`` nodes sit at 0 throughout.
    """

    def __init__(self, n: int, k: int, eps, y0: int, phases: int, sigma: Optional[int] = None):
        eps = Fraction(eps)
        sigma = n if sigma is None else sigma
        if not 1 <= k < sigma <= n:
            raise ValueError(f"need 1 <= k < sigma <= n, got k={k}, sigma={sigma}, n={n}")
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        y1 = math.floor((1 - eps) * y0) - 1
        if y1 < 0:
            raise ValueError(f"y0={y0} too small: low value {y1} would be negative")
        if phases < 0:
            raise ValueError("phases must be non-negative")
        super().__init__(n, y0)
        self.k, self.eps, self.y0, self.y1 = k, eps, y0, y1
        self.sigma, self.phases = sigma, phases
        self.horizon = 1 + phases * (sigma - k + 1)
        self.values = [y0] * sigma + [0] * (n - sigma)
        self.phase = 0
        self.drops = 0
        self.forced_drops = 0  # drops where no filter excluded y1 (should stay 0)

    def _next(self, view):
        if self.produced and self.phase < self.phases:
            if self.drops == self.sigma - self.k:
                self.values[: self.sigma] = [self.y0] * self.sigma
                self.drops = 0
                self.phase += 1
            else:
                at_top = [i for i in range(self.sigma) if self.values[i] == self.y0]
                hit = [i for i in at_top if view is not None and view.filters[i].lo > self.y1]
                if hit:
                    victim = hit[0]
                else:
                    victim = at_top[0]
                    self.forced_drops += 1
                self.values[victim] = self.y1
                self.drops += 1
        return list(self.values)


def lower_bound_adversary(n: int, k: int, eps, y0: int, phases: int, sigma: Optional[int] = None):
    return LowerBoundAdversary(n, k, eps, y0, phases, sigma)


class StochasticAdversary(AdaptiveAdversary):
    """Non-adaptive source: a matrix drawn up front from a seeded generator."""

    def __init__(self, rows: np.ndarray, delta: int):
        super().__init__(rows.shape[1], delta)
        self._rows = rows
        self.horizon = rows.shape[0]

    def _next(self, view):
        t = len(self.produced)
        if t >= self._rows.shape[0]:
            raise IndexError("stochastic trace exhausted")
        return self._rows[t].tolist()


class TraceReplay(StochasticAdversary):
    def __init__(self, trace: StreamTrace):
        super().__init__(np.asarray(trace.rows, dtype=np.int64), trace.delta)


def _random_walk(rng, n, horizon, delta, step=1, start=None):
    if step < 0:
        raise ValueError("step must be >= 0")
    start = rng.integers(0, delta + 1, size=n) if start is None else np.full(n, start)
    moves = rng.integers(-step, step + 1, size=(horizon - 1, n))
    rows = np.vstack([start[None, :], start[None, :] + np.cumsum(moves, axis=0)])
    # reflect into [0, delta]
    if delta == 0:
        return np.zeros_like(rows)
    period = 2 * delta
    rows = np.mod(rows, period)
    return np.where(rows > delta, period - rows, rows)


def _iid_uniform(rng, n, horizon, delta):
    return rng.integers(0, delta + 1, size=(horizon, n))


def _oscillator(rng, n, horizon, delta, k, eps, sigma, center=None, amplitude=None, change_prob=0.3, drift=0.0):
    """``sigma`` nodes jitter around a common center; the rest stay far away.

    ``k // 2`` nodes live far above the cluster and the remainder far below,
    so ranks k and k+1 always fall inside the cluster.  With ``drift > 0`` the
    center performs a log-space random walk within a factor 2 of its start;
    the jitter amplitude then follows the center, capped so that the whole
    cluster stays inside one neighbourhood.
    """
    eps = Fraction(eps)
    high = k // 2
    if not k - high < sigma <= n - high:
        raise ValueError(f"sigma={sigma} must exceed k - k//2 = {k - high} and leave room for {high} high nodes")
    center = delta // 16 if center is None else center
    if center < 8 or 16 * center > delta:
        raise ValueError("need 8 <= center and delta >= 16 * center")
    if not 0 < eps <= Fraction(1, 2):
        raise ValueError("oscillator bands assume 0 < eps <= 1/2")
    cap = eps / (2 - eps)
    if amplitude is not None and not 0 <= amplitude <= cap * (center // 2 if drift else center):
        raise ValueError("amplitude must keep the cluster inside one neighbourhood")
    if not 0 <= change_prob <= 1 or drift < 0:
        raise ValueError("need 0 <= change_prob <= 1 and drift >= 0")
    low = n - high - sigma
    rows = np.empty((horizon, n), dtype=np.int64)
    hi_band = rng.integers(8 * center, 16 * center + 1, size=high)
    lo_band = rng.integers(0, center // 8 + 1, size=low)
    shift = 0.0
    cur = None
    for t in range(horizon):
        if drift:
            shift = float(np.clip(shift + rng.normal(0, drift), -1, 1))
        c_t = int(round(center * 2.0**shift))
        a_t = math.floor(cap * c_t) if amplitude is None else amplitude
        fresh = c_t + rng.integers(-a_t, a_t + 1, size=sigma)
        cur = fresh if cur is None else np.where(rng.random(sigma) < change_prob, fresh, cur)
        if drift:
            cur = np.clip(cur, c_t - a_t, c_t + a_t)
        rows[t] = np.concatenate([hi_band, cur, lo_band])
    return rows


def _crossing(rng, n, horizon, delta, scale=0.5):
    """Multiplicative random walk in log space over ``[1, delta]``."""
    top = math.log2(max(delta, 2))
    x0 = rng.uniform(0, top, size=n)
    steps = rng.normal(0, scale, size=(horizon - 1, n))
    logs = np.vstack([x0[None, :], x0[None, :] + np.cumsum(steps, axis=0)])
    logs = np.mod(logs, 2 * top)
    logs = np.where(logs > top, 2 * top - logs, logs)
    return np.minimum(np.round(np.exp2(logs)), delta).astype(np.int64)


_GENERATORS = {
    "random_walk": _random_walk,
    "iid_uniform": _iid_uniform,
    "oscillator": _oscillator,
    "crossing": _crossing,
}
STOCHASTIC_KINDS = tuple(_GENERATORS)


def stochastic_generator(kind: str, params: dict, seed: int) -> StochasticAdversary:
    """A seeded workload; ``params`` needs ``n``, ``horizon`` and ``delta`` plus kind-specific keys."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown generator {kind!r}; choose from {STOCHASTIC_KINDS}")
    params = dict(params)
    try:
        n, horizon, delta = params.pop("n"), params.pop("horizon"), params.pop("delta")
    except KeyError as e:
        raise ValueError(f"missing parameter {e}") from None
    if n < 1 or horizon < 1 or delta < 0:
        raise ValueError("need n >= 1, horizon >= 1, delta >= 0")
    rng = rng_stream(seed, "trace", kind)
    try:
        rows = _GENERATORS[kind](rng, n, horizon, delta, **params)
    except TypeError as e:
        raise ValueError(f"bad parameters for {kind}: {e}") from None
    return StochasticAdversary(np.asarray(rows, dtype=np.int64), delta)
