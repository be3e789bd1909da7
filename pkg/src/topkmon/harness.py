"""Experiment runner: protocol x adversary x seeds, offline oracles, ratios, bound formulas."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Optional

from .adversary import STOCHASTIC_KINDS, AdaptiveAdversary, LowerBoundAdversary, stochastic_generator
from .comms import rng_stream
from .model import StreamTrace, format_rat, neighborhood_at
from .offline import opt_exact, opt_greedy
from .protocols import MONITORS, EpochRecord, Simulation

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "SeedResult",
    "calibration",
    "make_adversary",
    "predict_bound",
    "run_experiment",
    "run_seed",
]

FORMULAS = ("midpoint", "scattered", "dense", "half_eps", "existence")


@lru_cache(maxsize=1)
def calibration() -> dict:
    """Frozen constants measured on reference seeds (see ``calibration.json``)."""
    text = resources.files("topkmon").joinpath("calibration.json").read_text()
    return json.loads(text)


def _lg(x: float) -> float:
    return math.log2(max(x, 2))


def _lglg(x: float) -> float:
    return _lg(_lg(x))


def predict_bound(formula: str, params: dict, c: float = 1.0) -> float:
    """Evaluate a per-epoch message bound; logs are base 2 and clamped to be at least 1.

    ``params`` may hold ``k``, ``n``, ``delta``, ``eps``, ``sigma`` and ``vk``
    (the k-th value, used by the dense formula).
    """
    if formula not in FORMULAS:
        raise ValueError(f"unknown formula {formula!r}; choose from {FORMULAS}")
    if formula == "existence":
        return 6.0 * c
    k, n = params.get("k", 1), params.get("n", 2)
    delta = params.get("delta", 2)
    if min(k, n, delta) <= 0:
        raise ValueError("bound parameters must be positive")
    select = k * _lg(n)
    if formula == "midpoint":
        return c * (select + _lg(delta))
    eps = Fraction(params["eps"])
    if eps <= 0:
        raise ValueError("eps must be positive")
    tail = _lglg(delta) + _lg(1 / eps)
    if formula == "scattered":
        return c * (select + tail)
    sigma = params.get("sigma", 1)
    if formula == "half_eps":
        return c * (sigma + select + tail)
    lam = _lg(float(eps) * params.get("vk", delta))
    # the sub-protocol cost sigma * log|L| is charged once per node move or halving
    return c * (select + sigma * lam + (sigma + lam) * sigma * lam + tail)


@dataclass
class ExperimentConfig:
    n: int
    k: int
    eps: Fraction = Fraction(1, 4)
    eps_prime: Optional[Fraction] = None
    delta: int = 2**16
    horizon: Optional[int] = 200
    protocol: str = "eps_topk"
    adversary: str = "random_walk"
    adversary_params: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = (0,)
    check: bool = True
    include_timing: bool = False

    def __post_init__(self) -> None:
        self.eps = Fraction(self.eps)
        if self.eps_prime is not None:
            self.eps_prime = Fraction(self.eps_prime)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not 1 <= self.k < self.n:
            raise ValueError(f"need 1 <= k < n, got k={self.k}, n={self.n}")
        if self.protocol not in MONITORS:
            raise ValueError(f"unknown protocol {self.protocol!r}; choose from {sorted(MONITORS)}")
        if self.protocol == "midpoint":
            if not 0 <= self.eps < 1:
                raise ValueError("eps must lie in [0, 1)")
        elif not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.eps_prime is not None and not 0 < self.eps_prime <= self.eps / 2:
            raise ValueError("eps_prime must lie in (0, eps/2]")
        if self.adversary not in STOCHASTIC_KINDS + ("lower_bound",):
            raise ValueError(f"unknown adversary {self.adversary!r}")
        if self.horizon is None and self.adversary != "lower_bound":
            raise ValueError("horizon is required for stochastic adversaries")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["eps"] = format_rat(self.eps)
        d["eps_prime"] = None if self.eps_prime is None else format_rat(self.eps_prime)
        d["seeds"] = list(self.seeds)
        d["adversary_params"] = {k: _plain(v) for k, v in self.adversary_params.items()}
        return d


def _plain(v):
    return format_rat(v) if isinstance(v, Fraction) else v


def make_adversary(cfg: ExperimentConfig, seed: int) -> AdaptiveAdversary:
    p = dict(cfg.adversary_params)
    if cfg.adversary == "lower_bound":
        return LowerBoundAdversary(
            cfg.n, cfg.k, cfg.eps, p.get("y0", 1000), p.get("phases", 1), p.get("sigma")
        )
    if cfg.adversary == "oscillator":
        p.setdefault("k", cfg.k)
        p.setdefault("eps", cfg.eps)
    return stochastic_generator(cfg.adversary, dict(n=cfg.n, horizon=cfg.horizon, delta=cfg.delta, **p), seed)


@dataclass
class SeedResult:
    seed: int
    trace: StreamTrace
    sim: Simulation
    epochs: list[EpochRecord]
    sigma: int
    opt: dict
    wall_clock: float

    @property
    def messages(self) -> int:
        return self.sim.ledger.messages

    def ratio(self, which: str = "exact") -> float:
        return self.messages / self.opt[which].reconfig_events

    def detailed_ratio(self, which: str = "exact") -> float:
        return self.messages / self.opt[which].detailed_cost


def run_seed(cfg: ExperimentConfig, seed: int, oracles: bool = True) -> SeedResult:
    """One seeded run: drive the protocol against the adversary, then the oracles."""
    adv = make_adversary(cfg, seed)
    horizon = adv.horizon if cfg.horizon is None else cfg.horizon
    if adv.horizon is not None:
        horizon = min(horizon, adv.horizon)
    check_eps = Fraction(0) if cfg.protocol == "midpoint" else cfg.eps
    sim = Simulation(MONITORS[cfg.protocol], cfg.n, cfg.k, cfg.eps, rng_stream(seed, "protocol"),
                     check_eps=check_eps, check=cfg.check)
    start = time.perf_counter()
    for _ in range(horizon):
        sim.step(adv.next_values(sim.view()))
    epochs = sim.finish()
    elapsed = time.perf_counter() - start
    trace = StreamTrace.from_rows(sim.rows)
    sigma_eps = cfg.eps if cfg.eps > 0 else Fraction(0)
    sigma = max(neighborhood_at(row, cfg.k, sigma_eps).sigma_t for row in trace.rows)
    opt = {}
    if oracles:
        opt["exact"] = opt_exact(trace, cfg.k)
        if cfg.eps > 0:
            opt["eps"] = opt_greedy(trace, cfg.k, cfg.eps)
        if cfg.eps_prime is not None:
            opt["eps_prime"] = opt_greedy(trace, cfg.k, cfg.eps_prime)
    return SeedResult(seed, trace, sim, epochs, sigma, opt, elapsed)


_FORMULA_OF = {"midpoint": "midpoint", "scattered": "scattered", "eps_topk": "dense", "dense": "dense", "half_eps": "half_eps"}


@dataclass
class RunReport:
    config: ExperimentConfig
    runs: list[dict]
    summary: dict

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "runs": self.runs, "summary": self.summary}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def csv_summary(self) -> str:
        cols = ["seed", "messages", "uplink", "opt_exact", "opt_eps", "ratio", "detailed_ratio", "sigma"]
        lines = [",".join(cols)]
        for r in self.runs:
            lines.append(",".join(str(r.get(c, "")) for c in cols))
        return "\n".join(lines) + "\n"


def _seed_row(cfg: ExperimentConfig, res: SeedResult) -> dict:
    ledger = res.sim.ledger.to_dict()
    ledger.pop("per_step")
    main = "eps" if "eps" in res.opt and cfg.protocol not in ("midpoint", "scattered") else "exact"
    row = {
        "seed": res.seed,
        "horizon": res.trace.horizon,
        "messages": res.messages,
        "uplink": ledger["uplink"],
        "ledger": ledger,
        "epochs": [e.to_dict() for e in res.epochs],
        "sigma": res.sigma,
        "opt": {name: {"reconfig_events": s.reconfig_events, "detailed_cost": s.detailed_cost}
                for name, s in res.opt.items()},
        "opt_exact": res.opt["exact"].reconfig_events,
        "opt_eps": res.opt["eps"].reconfig_events if "eps" in res.opt else None,
        "ratio_against": main,
        "ratio": round(res.ratio(main), 6),
        "detailed_ratio": round(res.detailed_ratio(main), 6),
        "predicted_bound": round(
            predict_bound(
                _FORMULA_OF[cfg.protocol],
                dict(k=cfg.k, n=cfg.n, delta=max(res.trace.delta, 2), eps=cfg.eps or Fraction(1, 2),
                     sigma=res.sigma, vk=max(res.trace.delta, 2)),
            ),
            6,
        ),
    }
    if cfg.include_timing:
        row["wall_clock_s"] = res.wall_clock
    return row


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Run every seed of ``cfg`` and fold the results in seed order."""
    rows = [_seed_row(cfg, run_seed(cfg, seed)) for seed in cfg.seeds]
    ratios = [r["ratio"] for r in rows]
    detailed = [r["detailed_ratio"] for r in rows]
    summary = {
        "seeds": len(rows),
        "mean_messages": sum(r["messages"] for r in rows) / len(rows),
        "mean_ratio": sum(ratios) / len(rows),
        "max_ratio": max(ratios),
        "mean_detailed_ratio": sum(detailed) / len(rows),
        "min_detailed_ratio": min(detailed),
        "sigma": max(r["sigma"] for r in rows),
    }
    return RunReport(cfg, rows, summary)
