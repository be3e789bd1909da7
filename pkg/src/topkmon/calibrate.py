"""Measure the constants that scale the asymptotic bounds.

The acceptance workloads are defined here once so that calibration (on the
reference seeds) and checking (on disjoint test seeds) use identical setups.
``python -m topkmon.calibrate --write`` refreshes ``calibration.json``.
"""

from __future__ import annotations

import argparse
import json
import math
from fractions import Fraction
from importlib import resources
from typing import Iterable

import numpy as np

from .comms import MessageLedger, find_max, rng_stream
from .harness import ExperimentConfig, SeedResult, predict_bound, run_seed

__all__ = [
    "REFERENCE_SEEDS",
    "dense_config",
    "find_max_uplink",
    "half_eps_config",
    "half_eps_epoch_excess",
    "scattered_bound",
    "scattered_config",
    "scattered_phase_ratios",
]

REFERENCE_SEEDS = range(10_000, 10_200)

SCATTERED_N, SCATTERED_K, SCATTERED_DELTA, SCATTERED_T = 64, 4, 2**32, 100
HALF_N, HALF_K, HALF_EPS, HALF_EPS_PRIME, HALF_T = 32, 4, Fraction(1, 2), Fraction(1, 4), 200
DENSE_N, DENSE_K, DENSE_EPS, DENSE_T = 32, 4, Fraction(1, 4), 200


def find_max_uplink(n: int, seeds: Iterable[int]) -> list[int]:
    """Uplink messages of one max search over ``n`` uniform values per seed."""
    out = []
    for s in seeds:
        rng = rng_stream(s, "find_max_values")
        values = rng.integers(0, 2**20, size=n).tolist()
        ledger = MessageLedger()
        find_max(values, range(n), rng_stream(s, "find_max"), ledger)
        out.append(ledger.total.uplink)
    return out


def scattered_config(eps: Fraction, seeds: Iterable[int]) -> ExperimentConfig:
    return ExperimentConfig(
        n=SCATTERED_N, k=SCATTERED_K, eps=eps, delta=SCATTERED_DELTA, horizon=SCATTERED_T,
        protocol="scattered", adversary="crossing", seeds=tuple(seeds),
    )


def scattered_bound(eps: Fraction) -> float:
    return predict_bound("scattered", dict(k=SCATTERED_K, n=SCATTERED_N, delta=SCATTERED_DELTA, eps=eps))


def scattered_phase_ratios(eps: Fraction, seeds: Iterable[int]) -> list[tuple[SeedResult, float]]:
    """Per seed: online messages per exact-oracle segment, divided by the bound formula."""
    cfg = scattered_config(eps, seeds)
    bound = scattered_bound(eps)
    out = []
    for s in cfg.seeds:
        res = run_seed(cfg, s)
        out.append((res, res.ratio("exact") / bound))
    return out


def half_eps_config(sigma: int, seeds: Iterable[int]) -> ExperimentConfig:
    return ExperimentConfig(
        n=HALF_N, k=HALF_K, eps=HALF_EPS, eps_prime=HALF_EPS_PRIME, delta=2**16, horizon=HALF_T,
        protocol="half_eps", adversary="oscillator",
        adversary_params={"sigma": sigma, "drift": 0.05}, seeds=tuple(seeds),
    )


def half_eps_epoch_excess(res: SeedResult) -> list[float]:
    """For each half-eps epoch: ``(uplink - 2 sigma) / (k log2 n)``."""
    scale = HALF_K * math.log2(HALF_N)
    return [(e.cost.uplink - 2 * res.sigma) / scale for e in res.epochs if e.kind == "half_eps"]


def dense_config(sigma: int, seeds: Iterable[int]) -> ExperimentConfig:
    return ExperimentConfig(
        n=DENSE_N, k=DENSE_K, eps=DENSE_EPS, delta=2**16, horizon=DENSE_T,
        protocol="eps_topk", adversary="oscillator",
        adversary_params={"sigma": sigma, "drift": 0.05}, seeds=tuple(seeds),
    )


def measure(seeds: Iterable[int] = REFERENCE_SEEDS) -> dict:
    seeds = list(seeds)
    fm = find_max_uplink(1024, seeds)
    scattered = max(r for eps in (Fraction(1, 2), Fraction(1, 16)) for _, r in scattered_phase_ratios(eps, seeds))
    half = max(
        max(half_eps_epoch_excess(run_seed(half_eps_config(sigma, [s]), s, oracles=False)), default=0.0)
        for sigma in (4, 16)
        for s in seeds
    )
    return {
        "find_max": round(float(np.mean(fm)) / math.log2(1024), 4),
        "scattered": round(scattered, 4),
        "half_eps": round(half, 4),
        "reference_seeds": f"{seeds[0]}-{seeds[-1]}",
        "slack": 1.25,
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--write", action="store_true", help="overwrite the packaged calibration.json")
    a = p.parse_args(argv)
    consts = measure()
    text = json.dumps(consts, indent=2, sort_keys=True) + "\n"
    print(text, end="")
    if a.write:
        path = resources.files("topkmon").joinpath("calibration.json")
        with resources.as_file(path) as f:
            f.write_text(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
