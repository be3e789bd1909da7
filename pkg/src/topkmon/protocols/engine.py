"""Step-wise simulation driver shared by all monitoring protocols.

A protocol is a generator function.  It talks to the nodes only through the
:class:`Server` (probes, broadcasts, unicasts, publishing filters) and
suspends with a bare ``yield`` whenever it waits for the next filter
violation; the driver resumes it with ``gen.send(violation)``.  Sub-protocols
nest with ``yield from`` and hand their result back as the return value.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Generator, Iterable, Optional, Sequence

import numpy as np

from ..comms import MessageLedger, StepCounts, Violation, report_violations, top_k_plus_one
from ..model import (
    INF,
    Filter,
    FilterAssignment,
    format_rat,
    is_valid_filter_set,
    is_valid_output,
)
from .generic import GuessInterval

__all__ = [
    "EpochRecord",
    "InvariantViolation",
    "OutcomeReason",
    "ProtocolOutcome",
    "Server",
    "ServerView",
    "Simulation",
]

Proto = Generator[None, Violation, Any]

MAX_EXCHANGES_PER_STEP = 200_000


class InvariantViolation(AssertionError):
    """Raised when an output or a filter set fails validation at the end of a step."""

    def __init__(self, message: str, dump: dict):
        super().__init__(message)
        self.dump = dump


class OutcomeReason(str, enum.Enum):
    INTERVAL_EMPTY = "interval_empty"
    HANDOFF_TO_SCATTERED = "handoff_to_scattered"
    HANDOFF_TO_DENSE = "handoff_to_dense"
    TRACE_EXHAUSTED = "trace_exhausted"


@dataclass(frozen=True)
class ProtocolOutcome:
    end_time: int
    final_interval: GuessInterval
    reason: OutcomeReason
    ledger_delta: StepCounts

    def __post_init__(self) -> None:
        if self.reason is OutcomeReason.INTERVAL_EMPTY and not self.final_interval.empty:
            raise ValueError("interval_empty outcome with a nonempty interval")


@dataclass
class EpochRecord:
    """One run of a protocol between two full re-initialisations."""

    kind: str
    t_start: int
    start_cost: StepCounts
    stats: dict = field(default_factory=dict)
    outcome: Optional[ProtocolOutcome] = None

    @property
    def t_end(self) -> Optional[int]:
        return None if self.outcome is None else self.outcome.end_time

    @property
    def cost(self) -> StepCounts:
        return self.outcome.ledger_delta if self.outcome else StepCounts()

    def to_dict(self) -> dict:
        o = self.outcome
        return {
            "kind": self.kind,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "reason": o.reason.value if o else None,
            "final_interval": o.final_interval.to_json() if o else None,
            "messages": o.ledger_delta.messages if o else None,
            "uplink": o.ledger_delta.uplink if o else None,
            "stats": _jsonable(self.stats),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in items]
    if isinstance(x, Fraction):
        return format_rat(x)
    if isinstance(x, float) and x == INF:
        return "inf"
    if isinstance(x, enum.Enum):
        return x.value
    if isinstance(x, GuessInterval):
        return x.to_json()
    if isinstance(x, np.integer):
        return int(x)
    return x


@dataclass(frozen=True)
class ServerView:
    """What an adaptive adversary may inspect before choosing the next values."""

    t: int
    filters: tuple[Filter, ...]
    output: frozenset[int]
    tag: str


class Server:
    """The protocol side of one run: state published to the nodes plus costed primitives."""

    def __init__(
        self,
        n: int,
        k: int,
        eps: Fraction,
        rng: np.random.Generator,
        ledger: MessageLedger,
        log_events: bool = False,
    ):
        if not 1 <= k < n:
            raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
        self.n = n
        self.k = k
        self.eps = Fraction(eps)
        self.rng = rng
        self.ledger = ledger
        self.t = 0
        self._values: tuple[int, ...] = ()
        self.filters: tuple[Filter, ...] = tuple(Filter(0) for _ in range(n))
        self.output: frozenset[int] = frozenset()
        self.tag = "init"
        self.log_events = log_events
        self.events: list[dict] = []
        self.epochs: list[EpochRecord] = []
        self.state: Any = None  # live protocol state, for inspection only

    # -- communication primitives -------------------------------------------------

    def probe_top(self) -> list[tuple[int, int]]:
        """The k+1 best-ranked nodes with their current values."""
        return top_k_plus_one(self._values, self.k, self.rng, self.ledger)

    def probe_at_least(self, threshold: Fraction) -> dict[int, int]:
        """Broadcast a threshold; every node at or above it reports its value."""
        self.ledger.broadcast()
        found = {i: v for i, v in enumerate(self._values) if v >= threshold}
        self.ledger.uplink(len(found))
        self.ledger.rounds()
        return found

    def broadcast(self, what: str, **info) -> None:
        self.ledger.broadcast()
        self.emit("broadcast", what=what, **info)

    def unicast(self, node: int, what: str) -> None:
        self.ledger.downlink()
        self.emit("unicast", node=node, what=what)

    def publish(self, filters: Sequence[Filter], output: Iterable[int]) -> None:
        self.filters = tuple(filters)
        self.output = frozenset(output)

    def emit(self, event: str, **fields) -> None:
        if self.log_events:
            self.events.append({"t": self.t, "event": event, **_jsonable(fields)})

    # -- epoch bookkeeping --------------------------------------------------------

    def open_epoch(self, kind: str = "?") -> EpochRecord:
        rec = EpochRecord(kind, self.t, self.ledger.snapshot())
        self.epochs.append(rec)
        return rec

    def close_epoch(self, rec: EpochRecord, reason: OutcomeReason, interval: GuessInterval) -> ProtocolOutcome:
        rec.outcome = ProtocolOutcome(self.t, interval, reason, self.ledger.snapshot() - rec.start_cost)
        self.emit("epoch_end", kind=rec.kind, reason=reason, interval=interval)
        return rec.outcome

    @property
    def current_epoch(self) -> EpochRecord:
        return self.epochs[-1]

    def view(self) -> ServerView:
        return ServerView(self.t, self.filters, self.output, self.tag)


MonitorFactory = Callable[[Server], Proto]


class Simulation:
    """Drive a monitoring protocol one time step at a time.

    ``check_eps`` is the error used by the end-of-step validity assertions
    (``0`` for exact monitoring).  With ``check=True`` a failing output or
    filter set raises :class:`InvariantViolation` carrying a state dump.
    """

    def __init__(
        self,
        monitor: MonitorFactory,
        n: int,
        k: int,
        eps: Fraction,
        rng: np.random.Generator,
        check_eps: Optional[Fraction] = None,
        check: bool = True,
        log_events: bool = False,
    ):
        self.ledger = MessageLedger()
        self.server = Server(n, k, eps, rng, self.ledger, log_events=log_events)
        self.monitor = monitor
        self.check = check
        self.check_eps = self.server.eps if check_eps is None else Fraction(check_eps)
        self.t = 0
        self.rows: list[tuple[int, ...]] = []
        self._gen: Optional[Proto] = None

    @property
    def n(self) -> int:
        return self.server.n

    def view(self) -> ServerView:
        return self.server.view()

    def step(self, values: Sequence[int]) -> list[dict]:
        """Feed the values of the next time step and run the protocol exchange."""
        srv = self.server
        values = tuple(int(v) for v in values)
        if len(values) != srv.n or any(v < 0 for v in values):
            raise ValueError(f"expected {srv.n} natural values, got {values}")
        first_event = len(srv.events)
        srv.t = self.t
        srv._values = values
        self.ledger.at(self.t)
        self.rows.append(values)
        if self._gen is None:
            self._gen = self.monitor(srv)
            next(self._gen)
        for _ in range(MAX_EXCHANGES_PER_STEP):
            viol = report_violations(srv.filters, values, srv.rng, self.ledger)
            if viol is None:
                break
            srv.emit("violation", node=viol.node, direction=viol.direction, value=viol.value)
            self._gen.send(viol)
        else:
            raise RuntimeError(f"protocol exchange did not settle at t={self.t}")
        if self.check:
            self._assert_valid(values)
        self.t += 1
        return srv.events[first_event:]

    def _assert_valid(self, values: tuple[int, ...]) -> None:
        srv = self.server
        problems = []
        if not is_valid_output(values, srv.k, self.check_eps, srv.output):
            problems.append("output")
        if not is_valid_filter_set(FilterAssignment(srv.filters, self.check_eps), srv.output, values):
            problems.append("filters")
        if problems:
            dump = {
                "t": self.t,
                "problems": problems,
                "values": list(values),
                "output": sorted(srv.output),
                "filters": [f.to_json() for f in srv.filters],
                "tag": srv.tag,
                "trace": [list(r) for r in self.rows],
                "recent_events": srv.events[-50:],
            }
            raise InvariantViolation(
                f"invalid {' and '.join(problems)} at t={self.t} ({srv.tag})", dump
            )

    def finish(self) -> list[EpochRecord]:
        """Close the running epoch as trace-exhausted and return all epochs."""
        srv = self.server
        if srv.epochs and srv.epochs[-1].outcome is None:
            rec = srv.epochs[-1]
            interval = rec.stats.get("interval", GuessInterval.empty_interval())
            srv.t = max(self.t - 1, rec.t_start)
            srv.close_epoch(rec, OutcomeReason.TRACE_EXHAUSTED, interval)
        if self._gen is not None:
            self._gen.close()
        return srv.epochs

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.server.events)
