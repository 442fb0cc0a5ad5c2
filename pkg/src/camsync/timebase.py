"""Clock-domain tagged timestamps and simulated device clocks.

All times are signed integer nanoseconds. A :class:`Timestamp` carries the
name of the clock domain it was read from; arithmetic that would mix two
domains raises :class:`DomainError` instead of silently producing garbage.
Durations are plain ``int`` nanoseconds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

NS = 1
US = 1_000
MS = 1_000_000
S = 1_000_000_000

REFERENCE = "reference"
LEADER = "leader"

_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1


def client_domain(index: int) -> str:
    return f"client-{index}"


class DomainError(ValueError):
    """Raised when timestamps from different clock domains are combined."""


@dataclass(frozen=True, order=False)
class Timestamp:
    nanos: int
    domain: str = REFERENCE

    def __post_init__(self):
        if not isinstance(self.nanos, int):
            object.__setattr__(self, "nanos", int(self.nanos))
        if not _INT64_MIN <= self.nanos <= _INT64_MAX:
            raise OverflowError(f"{self.nanos} ns does not fit in int64")

    def _check(self, other: "Timestamp") -> None:
        if other.domain != self.domain:
            raise DomainError(f"cannot combine {self.domain!r} with {other.domain!r}")

    def __add__(self, duration: int) -> "Timestamp":
        if isinstance(duration, Timestamp):
            raise TypeError("cannot add two timestamps")
        return Timestamp(self.nanos + int(duration), self.domain)

    def __sub__(self, other):
        if isinstance(other, Timestamp):
            self._check(other)
            return self.nanos - other.nanos
        return Timestamp(self.nanos - int(other), self.domain)

    def __lt__(self, other: "Timestamp") -> bool:
        self._check(other)
        return self.nanos < other.nanos

    def __le__(self, other: "Timestamp") -> bool:
        self._check(other)
        return self.nanos <= other.nanos

    def __gt__(self, other: "Timestamp") -> bool:
        self._check(other)
        return self.nanos > other.nanos

    def __ge__(self, other: "Timestamp") -> bool:
        self._check(other)
        return self.nanos >= other.nanos

    def retag(self, domain: str) -> "Timestamp":
        return Timestamp(self.nanos, domain)


@dataclass(frozen=True)
class LocalClock:
    """A device clock: ``local = ref + offset + drift_rate * ref``."""

    domain: str
    offset: int = 0
    drift_rate: float = 0.0

    def __post_init__(self):
        if self.drift_rate <= -1.0:
            raise ValueError("drift_rate must be greater than -1")

    def read(self, reference_now: Timestamp) -> Timestamp:
        if reference_now.domain != REFERENCE:
            raise DomainError(f"expected a reference timestamp, got {reference_now.domain!r}")
        t = reference_now.nanos
        return Timestamp(t + self.offset + _drift_term(self.drift_rate, t), self.domain)

    def to_reference(self, local: Timestamp) -> Timestamp:
        """Inverse of :meth:`read` (exact when drift_rate is 0)."""
        if local.domain != self.domain:
            raise DomainError(f"expected a {self.domain!r} timestamp, got {local.domain!r}")
        x = local.nanos - self.offset
        if self.drift_rate == 0.0:
            return Timestamp(x, REFERENCE)
        guess = round(x / (1.0 + self.drift_rate))
        # read() rounds the drift term, so settle on the nearest integer preimage
        for _ in range(4):
            err = guess + _drift_term(self.drift_rate, guess) - x
            if err == 0:
                break
            guess -= err
        return Timestamp(guess, REFERENCE)


def _drift_term(rate: float, t: int) -> int:
    if rate == 0.0:
        return 0
    return round(rate * t)


def clock_read(clock: LocalClock, reference_now: Timestamp) -> Timestamp:
    return clock.read(reference_now)


@dataclass(frozen=True)
class ClockEstimate:
    """Estimated offset of a client clock relative to the leader clock.

    ``theta`` is client minus leader, so a client timestamp minus ``theta``
    is the same instant on the leader's clock.
    """

    theta: int
    phi: int
    filter: str
    samples_used: int
    client_domain: str = "client-1"
    leader_domain: str = LEADER
    variance: float | None = None


def convert(ts: Timestamp, estimate: ClockEstimate, target_domain: str) -> Timestamp:
    if ts.domain == target_domain:
        return ts
    pair = (ts.domain, target_domain)
    if pair == (estimate.client_domain, estimate.leader_domain):
        return Timestamp(ts.nanos - estimate.theta, target_domain)
    if pair == (estimate.leader_domain, estimate.client_domain):
        return Timestamp(ts.nanos + estimate.theta, target_domain)
    raise DomainError(
        f"estimate relates {estimate.client_domain!r} and {estimate.leader_domain!r}, "
        f"not {ts.domain!r} -> {target_domain!r}"
    )


_UNITS = {"ns": NS, "us": US, "µs": US, "ms": MS, "s": S}
_DURATION_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(ns|us|µs|ms|s)\s*$")


def parse_duration(text: str) -> int:
    """Parse ``"1.5ms"``, ``"200us"``, ``"10 s"`` into integer nanoseconds."""
    m = _DURATION_RE.match(text)
    if not m:
        raise ValueError(f"not a duration (need a ns/us/ms/s suffix): {text!r}")
    value, unit = m.groups()
    return round(float(value) * _UNITS[unit])


def format_duration(nanos: int) -> str:
    for unit, scale in (("s", S), ("ms", MS), ("us", US)):
        if nanos % scale == 0 and nanos != 0:
            return f"{nanos // scale}{unit}"
    return f"{nanos}ns"
