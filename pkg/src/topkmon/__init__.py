"""Simulator for filter-based monitoring of the (approximate) top-k positions."""

from .comms import MessageLedger, existence_protocol, find_max, report_violations, rng_stream, top_k_plus_one
from .model import (
    INF,
    Direction,
    Filter,
    FilterAssignment,
    Neighborhood,
    OutputSet,
    StreamTrace,
    detect_violations,
    is_valid_filter_set,
    is_valid_output,
    load_trace,
    neighborhood,
    window_min_max,
)
from .offline import OptSchedule, feasible_exact, feasible_segment, opt_brute, opt_exact, opt_greedy
from .protocols import GuessInterval, InvariantViolation, Simulation

__version__ = "0.1.0"

__all__ = [
    "INF",
    "Direction",
    "Filter",
    "FilterAssignment",
    "GuessInterval",
    "InvariantViolation",
    "MessageLedger",
    "Neighborhood",
    "OptSchedule",
    "OutputSet",
    "Simulation",
    "StreamTrace",
    "detect_violations",
    "existence_protocol",
    "feasible_exact",
    "feasible_segment",
    "find_max",
    "is_valid_filter_set",
    "is_valid_output",
    "load_trace",
    "neighborhood",
    "opt_brute",
    "opt_exact",
    "opt_greedy",
    "report_violations",
    "rng_stream",
    "top_k_plus_one",
    "window_min_max",
]
