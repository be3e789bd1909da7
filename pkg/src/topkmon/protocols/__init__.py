"""Online filter-based monitoring protocols."""

from .dense import DenseState, SubOutcome, SubResult, dense_epoch, half_eps_epoch, pre_step, sub_run
from .engine import (
    EpochRecord,
    InvariantViolation,
    OutcomeReason,
    ProtocolOutcome,
    Server,
    ServerView,
    Simulation,
)
from .generic import GuessInterval, Phase, generic_round, phase_condition
from .monitors import MONITORS, eps_topk_monitor, half_eps_monitor, midpoint_monitor, scattered_monitor
from .scattered import (
    a1_certificate,
    a2_certificate,
    a3_certificate,
    certificate_filters,
    gap_test,
    midpoint_epoch,
    run_a1,
    run_a2,
    run_a3,
    run_step5,
    scattered_epoch,
)

__all__ = [
    "DenseState",
    "EpochRecord",
    "GuessInterval",
    "InvariantViolation",
    "MONITORS",
    "OutcomeReason",
    "Phase",
    "ProtocolOutcome",
    "Server",
    "ServerView",
    "Simulation",
    "SubOutcome",
    "SubResult",
    "a1_certificate",
    "a2_certificate",
    "a3_certificate",
    "certificate_filters",
    "dense_epoch",
    "eps_topk_monitor",
    "gap_test",
    "generic_round",
    "half_eps_epoch",
    "half_eps_monitor",
    "midpoint_epoch",
    "midpoint_monitor",
    "phase_condition",
    "pre_step",
    "run_a1",
    "run_a2",
    "run_a3",
    "run_step5",
    "scattered_epoch",
    "scattered_monitor",
    "sub_run",
]
