"""Guess intervals and the generic certificate-narrowing step."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from ..comms import Violation
from ..model import Direction

__all__ = ["GuessInterval", "Phase", "generic_round", "phase_condition"]


@dataclass(frozen=True)
class GuessInterval:
    """Integer interval ``[lo, hi]``; empty iff ``lo > hi``."""

    lo: int
    hi: int

    @classmethod
    def empty_interval(cls) -> "GuessInterval":
        return cls(1, 0)

    @property
    def empty(self) -> bool:
        return self.lo > self.hi

    @property
    def width(self) -> int:
        """Number of integers in the interval."""
        return max(0, self.hi - self.lo + 1)

    @property
    def midpoint(self) -> Fraction:
        if self.empty:
            raise ValueError("empty interval has no midpoint")
        return Fraction(self.lo + self.hi, 2)

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def intersect(self, lo=None, hi=None) -> "GuessInterval":
        new_lo = self.lo if lo is None else max(self.lo, math.ceil(lo))
        new_hi = self.hi if hi is None else min(self.hi, math.floor(hi))
        return GuessInterval(new_lo, new_hi)

    # The guessed boundary is known to lie strictly below (lower half) or
    # strictly above (upper half) the rational midpoint when these are taken,
    # so the midpoint itself is dropped whenever it is an integer.  A single
    # point halves to the empty interval.
    def lower_half(self) -> "GuessInterval":
        if self.empty:
            return self
        return GuessInterval(self.lo, math.ceil(self.midpoint) - 1)

    def upper_half(self) -> "GuessInterval":
        if self.empty:
            return self
        return GuessInterval(math.floor(self.midpoint) + 1, self.hi)

    def to_json(self) -> list[int]:
        return [self.lo, self.hi]


def generic_round(l: GuessInterval, m: int, violation: Violation) -> GuessInterval:
    """Shrink ``l`` after a violation against the certificate ``m``.

    A node leaving ``[0, m]`` upwards (from below) with value ``v`` proves the
    boundary is at least ``v``; a node dropping out of ``[m, inf]`` proves it is
    at most ``v``.
    """
    if not l.empty and not l.lo <= m <= l.hi:
        raise ValueError(f"certificate {m} outside {l}")
    if violation.direction is Direction.BELOW:
        return l.intersect(lo=violation.value)
    return l.intersect(hi=violation.value)


class Phase(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"


def phase_condition(l: GuessInterval, eps: Fraction) -> Phase:
    """Which narrowing strategy applies to the nonempty interval ``l``.

    For ``lo >= 2`` the doubly-logarithmic test ``loglog hi > loglog lo + 1``
    is the integer test ``hi > lo**2``; below 2 it is defined false.  The tags
    are checked in order, so exactly one is returned.
    """
    if l.empty:
        raise ValueError("phase of an empty interval is undefined")
    lo, hi = l.lo, l.hi
    if lo >= 2 and hi > lo * lo:
        return Phase.P1
    if hi > 4 * lo:
        return Phase.P2
    if hi * (1 - Fraction(eps)) > lo:
        return Phase.P3
    return Phase.P4
