"""Command line entry point: ``topkmon {simulate,opt,ratio,lowerbound,gen}``."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from .adversary import STOCHASTIC_KINDS, TraceReplay, stochastic_generator
from .comms import rng_stream
from .harness import ExperimentConfig, run_experiment
from .model import dump_trace, load_trace
from .offline import opt_exact, opt_greedy
from .protocols import MONITORS, InvariantViolation, Simulation


def _seeds(text: str) -> tuple[int, ...]:
    """``"3"`` -> (3,), ``"0-4"`` -> (0..4), ``"1,5,9"`` -> (1, 5, 9)."""
    out: list[int] = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _params(text: str) -> dict:
    return json.loads(text) if text else {}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eps", type=Fraction, default=Fraction(1, 4))
    p.add_argument("--eps-prime", type=Fraction, default=None)
    p.add_argument("--delta", type=int, default=2**16)
    p.add_argument("--horizon", type=int, default=200)
    p.add_argument("--protocol", choices=sorted(MONITORS), default="eps_topk")
    p.add_argument("--adversary", choices=list(STOCHASTIC_KINDS) + ["lower_bound"], default="random_walk")
    p.add_argument("--params", type=_params, default={}, help="adversary parameters as JSON")
    p.add_argument("--seeds", type=_seeds, default=(0,))
    p.add_argument("--out", type=Path, default=None)


def _config(a: argparse.Namespace, **over) -> ExperimentConfig:
    kw = dict(
        n=a.n, k=a.k, eps=a.eps, eps_prime=a.eps_prime, delta=a.delta, horizon=a.horizon,
        protocol=a.protocol, adversary=a.adversary, adversary_params=a.params, seeds=a.seeds,
    )
    kw.update(over)
    return ExperimentConfig(**kw)


def _emit(report, out: Path | None) -> None:
    if out is not None:
        out.write_text(report.to_json())
    sys.stdout.write(report.csv_summary())


def cmd_simulate(a: argparse.Namespace) -> int:
    if a.trace is None:
        _emit(run_experiment(_config(a)), a.out)
        return 0
    trace = load_trace(a.trace)
    check_eps = Fraction(0) if a.protocol == "midpoint" else a.eps
    sim = Simulation(MONITORS[a.protocol], trace.n, a.k, a.eps, rng_stream(a.seeds[0], "protocol"),
                     check_eps=check_eps, log_events=a.events is not None)
    src = TraceReplay(trace)
    for _ in range(trace.horizon):
        sim.step(src.next_values(sim.view()))
    epochs = sim.finish()
    report = {"ledger": sim.ledger.to_dict(), "epochs": [e.to_dict() for e in epochs]}
    if a.events is not None:
        a.events.write_text(sim.events_jsonl())
    if a.out is not None:
        a.out.write_text(json.dumps(report, sort_keys=True, indent=1))
    sys.stdout.write(f"messages,uplink,epochs\n{sim.ledger.messages},{sim.ledger.total.uplink},{len(epochs)}\n")
    return 0


def cmd_opt(a: argparse.Namespace) -> int:
    trace = load_trace(a.trace)
    sched = {"exact": opt_exact(trace, a.k).to_dict(), "eps": opt_greedy(trace, a.k, a.eps).to_dict()}
    if a.eps_prime is not None:
        sched["eps_prime"] = opt_greedy(trace, a.k, a.eps_prime).to_dict()
    text = json.dumps(sched, sort_keys=True, indent=1)
    if a.out is not None:
        a.out.write_text(text)
    sys.stdout.write("oracle,reconfig_events,detailed_cost\n")
    for name, s in sched.items():
        sys.stdout.write(f"{name},{s['reconfig_events']},{s['detailed_cost']}\n")
    return 0


def cmd_ratio(a: argparse.Namespace) -> int:
    _emit(run_experiment(_config(a)), a.out)
    return 0


def cmd_lowerbound(a: argparse.Namespace) -> int:
    params = {"y0": a.y0, "phases": a.phases, **a.params}
    _emit(run_experiment(_config(a, adversary="lower_bound", adversary_params=params, horizon=None)), a.out)
    return 0


def cmd_gen(a: argparse.Namespace) -> int:
    if a.adversary == "lower_bound":
        raise SystemExit("gen needs a stochastic adversary; lower_bound reacts to a protocol")
    params = dict(a.params)
    if a.adversary == "oscillator":
        params.setdefault("k", a.k)
        params.setdefault("eps", a.eps)
    adv = stochastic_generator(a.adversary, dict(n=a.n, horizon=a.horizon, delta=a.delta, **params), a.seeds[0])
    for _ in range(a.horizon):
        adv.next_values()
    text = dump_trace(adv.trace(), a.out, a.format)
    if a.out is None:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topkmon", description="Distributed top-k filter monitoring simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one protocol on a trace file or a generator")
    _common(p)
    p.add_argument("--trace", type=Path, default=None, help="JSONL or CSV trace to replay")
    p.add_argument("--events", type=Path, default=None, help="write protocol events as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("opt", help="offline oracle schedules for a trace")
    _common(p)
    p.add_argument("--trace", type=Path, required=True)
    p.set_defaults(func=cmd_opt)

    p = sub.add_parser("ratio", help="competitive ratios over a seed grid")
    _common(p)
    p.set_defaults(func=cmd_ratio)

    p = sub.add_parser("lowerbound", help="the adaptive lower-bound scenario")
    _common(p)
    p.add_argument("--y0", type=int, default=1000)
    p.add_argument("--phases", type=int, default=5)
    p.set_defaults(func=cmd_lowerbound)

    p = sub.add_parser("gen", help="emit a stochastic trace")
    _common(p)
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as e:
        sys.stderr.write(f"invariant violation: {e}\n")
        sys.stderr.write(json.dumps(e.dump, sort_keys=True) + "\n")
        return 2
    except ValueError as e:
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
