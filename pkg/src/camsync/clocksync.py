"""Four-timestamp offset handshake and the mean / min clock filters."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import kernels
from .netsim import CLIENT_TO_LEADER, LEADER_TO_CLIENT, LatencyModel, sample_one_way
from .timebase import LEADER, MS, REFERENCE, US, ClockEstimate, LocalClock, Timestamp

MEAN = "mean"
MIN = "min"


class OrderingError(ValueError):
    pass


class SyncError(RuntimeError):
    pass


class TransportTimeout(TimeoutError):
    pass


@dataclass(frozen=True)
class NtpSample:
    """One handshake.

    With ``initiator="leader"`` (the default), t0/t3 are leader-clock send and
    receive times and t1/t2 are client-clock receive and send times. With
    ``initiator="client"`` the roles are mirrored: the client stamps t0/t3.
    """

    t0: Timestamp
    t1: Timestamp
    t2: Timestamp
    t3: Timestamp
    initiator: str = "leader"

    @property
    def theta(self) -> int:
        return estimate_offset_delay(self)[0]

    @property
    def phi(self) -> int:
        return estimate_offset_delay(self)[1]


def estimate_offset_delay(s: NtpSample) -> tuple[int, int]:
    """Return (theta, phi): client-minus-leader offset and round-trip delay."""
    if s.t0.domain != s.t3.domain or s.t1.domain != s.t2.domain:
        raise OrderingError("t0/t3 and t1/t2 must each share a clock domain")
    if s.t2.nanos < s.t1.nanos:
        raise OrderingError(f"t2 < t1 ({s.t2.nanos} < {s.t1.nanos})")
    if s.t3.nanos < s.t0.nanos:
        raise OrderingError(f"t3 < t0 ({s.t3.nanos} < {s.t0.nanos})")
    a = s.t1.nanos - s.t0.nanos
    theta = kernels.half_away(a + (s.t2.nanos - s.t3.nanos))
    phi = (s.t3.nanos - s.t2.nanos) + a
    if s.initiator == "client":
        theta = -theta
    elif s.initiator != "leader":
        raise ValueError(f"unknown initiator {s.initiator!r}")
    return theta, phi


def sample_arrays(samples: Sequence[NtpSample]) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized theta/phi for a batch of samples (client-minus-leader sign)."""
    if not samples:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    t = np.array([(s.t0.nanos, s.t1.nanos, s.t2.nanos, s.t3.nanos) for s in samples], dtype=np.int64)
    if np.any(t[:, 2] < t[:, 1]) or np.any(t[:, 3] < t[:, 0]):
        raise OrderingError("sample ordering violated")
    theta, phi = kernels.ntp_offsets(
        np.ascontiguousarray(t[:, 0]), np.ascontiguousarray(t[:, 1]),
        np.ascontiguousarray(t[:, 2]), np.ascontiguousarray(t[:, 3]),
    )
    flip = np.array([s.initiator == "client" for s in samples])
    theta[flip] = -theta[flip]
    return theta, phi


@dataclass
class FilterConfig:
    kind: str = MIN
    samples: int = 300
    outlier_threshold: int = 10 * MS
    target_latency_threshold: int | None = None
    max_failures: int = 100
    interleave: bool = False

    def __post_init__(self):
        if self.kind not in (MEAN, MIN):
            raise ValueError(f"filter kind must be 'mean' or 'min', got {self.kind!r}")
        if self.samples < 1:
            raise ValueError("samples (K) must be >= 1")
        if self.outlier_threshold <= 0:
            raise ValueError("outlier_threshold must be positive")


def _domains(samples: Sequence[NtpSample]) -> tuple[str, str]:
    s = samples[0]
    if s.initiator == "client":
        return s.t0.domain, s.t1.domain
    return s.t1.domain, s.t0.domain


def mean_filter(samples: Sequence[NtpSample], config: FilterConfig | None = None) -> ClockEstimate:
    """Mean offset over samples whose round trip is within the outlier threshold.

    The returned ``phi`` is the mean round trip of the surviving samples and
    ``variance`` their (population) theta variance.
    """
    config = config or FilterConfig(kind=MEAN)
    if not samples:
        raise SyncError("no samples")
    theta, phi = sample_arrays(samples)
    keep = phi <= config.outlier_threshold
    if not keep.any():
        raise SyncError(f"all {len(samples)} samples exceed the {config.outlier_threshold} ns outlier threshold")
    kept = theta[keep]
    client, leader = _domains(samples)
    return ClockEstimate(
        theta=_round_mean(kept),
        phi=_round_mean(phi[keep]),
        filter=MEAN,
        samples_used=int(keep.sum()),
        client_domain=client,
        leader_domain=leader,
        variance=float(kept.var()),
    )


def _round_mean(values: np.ndarray) -> int:
    # nearest integer, halves away from zero
    total = int(values.sum(dtype=np.int64))
    n = len(values)
    q, r = divmod(abs(total), n)
    if 2 * r >= n:
        q += 1
    return q if total >= 0 else -q


def min_filter(samples: Sequence[NtpSample], config: FilterConfig | None = None) -> ClockEstimate:
    """Offset of the lowest round-trip sample; ties go to the earliest one."""
    if not samples:
        raise SyncError("no samples")
    theta, phi = sample_arrays(samples)
    i = int(np.argmin(phi))
    client, leader = _domains(samples)
    return ClockEstimate(
        theta=int(theta[i]), phi=int(phi[i]), filter=MIN, samples_used=len(samples),
        client_domain=client, leader_domain=leader,
    )


def apply_filter(samples: Sequence[NtpSample], config: FilterConfig) -> ClockEstimate:
    if config.kind == MEAN:
        return mean_filter(samples, config)
    return min_filter(samples, config)


def required_samples_mean(sample_stdev: float, target_stdev: float) -> int:
    """Messages needed so the mean filter's standard error reaches ``target_stdev``."""
    if target_stdev <= 0:
        raise ValueError("target_stdev must be positive")
    ratio = sample_stdev / target_stdev
    # guard against 100.00000000000001 from float division
    k = math.ceil(round(ratio * ratio, 9))
    return max(1, k)


class Transport(Protocol):
    def exchange(self) -> NtpSample: ...


@dataclass
class TrueLatencies:
    outbound: int
    inbound: int


class SimulatedTransport:
    """Leader-initiated handshakes over a :class:`LatencyModel`.

    Keeps a reference-time cursor that advances by each message's true
    transit and processing time, and logs the true one-way latencies so tests
    can reconstruct theta exactly.
    """

    def __init__(self, leader_clock: LocalClock, client_clock: LocalClock, latency: LatencyModel,
                 rng: np.random.Generator | None = None, processing_delay: int = 100 * US,
                 timeout: int | None = None, start: int = 0):
        self.leader_clock = leader_clock
        self.client_clock = client_clock
        self.latency = latency
        self.rng = latency.rng if rng is None else rng
        self.processing_delay = processing_delay
        self.timeout = timeout
        self.now = start
        self.log: list[TrueLatencies] = []
        self.timeouts = 0

    @property
    def true_theta(self) -> int:
        ref = Timestamp(self.now, REFERENCE)
        return self.client_clock.read(ref).nanos - self.leader_clock.read(ref).nanos

    def exchange(self) -> NtpSample:
        out = sample_one_way(self.latency, LEADER_TO_CLIENT, self.rng)
        back = sample_one_way(self.latency, CLIENT_TO_LEADER, self.rng)
        send = self.now
        if self.timeout is not None and out + self.processing_delay + back > self.timeout:
            self.now = send + self.timeout
            self.timeouts += 1
            raise TransportTimeout(f"no reply within {self.timeout} ns")
        recv = send + out
        reply = recv + self.processing_delay
        done = reply + back
        self.now = done
        self.log.append(TrueLatencies(out, back))
        return NtpSample(
            t0=self.leader_clock.read(Timestamp(send)),
            t1=self.client_clock.read(Timestamp(recv)),
            t2=self.client_clock.read(Timestamp(reply)),
            t3=self.leader_clock.read(Timestamp(done)),
        )


def exchange(transport: Transport) -> NtpSample:
    return transport.exchange()


@dataclass
class SyncOutcome:
    estimate: ClockEstimate
    samples: list[NtpSample] = field(default_factory=list)
    failures: int = 0
    elapsed: int = 0


def sync_client(transport: Transport, config: FilterConfig) -> SyncOutcome:
    """Run up to K handshakes and filter them.

    With the min filter and a ``target_latency_threshold``, stops as soon as a
    sample's round trip is at or below the threshold.
    """
    samples: list[NtpSample] = []
    failures = 0
    start = getattr(transport, "now", None)
    while len(samples) < config.samples:
        try:
            s = transport.exchange()
        except (TransportTimeout, TimeoutError):
            failures += 1
            if failures > config.max_failures:
                raise SyncError(f"{failures} transport failures, giving up")
            continue
        samples.append(s)
        if (config.kind == MIN and config.target_latency_threshold is not None
                and s.phi <= config.target_latency_threshold):
            break
    est = apply_filter(samples, config)
    elapsed = transport.now - start if start is not None else 0
    return SyncOutcome(est, samples, failures, elapsed)


def sync_rig(transports: Sequence[SimulatedTransport], config: FilterConfig) -> tuple[list[SyncOutcome], int]:
    """Synchronize several clients from one leader, round robin.

    Batches all K exchanges per client unless ``config.interleave`` is set, in
    which case the leader cycles through clients one message at a time. The
    leader is single-threaded, so each client's cursor starts where the
    previous message finished. Returns per-client outcomes and total elapsed
    reference time.
    """
    if not transports:
        return [], 0
    start = transports[0].now
    now = start
    if not config.interleave:
        outcomes = []
        for tr in transports:
            tr.now = now
            outcomes.append(sync_client(tr, config))
            now = tr.now
        return outcomes, now - start

    logs: list[list[NtpSample]] = [[] for _ in transports]
    failures = [0] * len(transports)
    active = list(range(len(transports)))
    while active:
        for i in list(active):
            tr = transports[i]
            tr.now = now
            try:
                s = tr.exchange()
            except (TransportTimeout, TimeoutError):
                failures[i] += 1
                if failures[i] > config.max_failures:
                    raise SyncError(f"client {i}: {failures[i]} transport failures, giving up")
                now = tr.now
                continue
            now = tr.now
            logs[i].append(s)
            done = len(logs[i]) >= config.samples or (
                config.kind == MIN and config.target_latency_threshold is not None
                and s.phi <= config.target_latency_threshold)
            if done:
                active.remove(i)
    outcomes = [SyncOutcome(apply_filter(log, config), log, f, 0) for log, f in zip(logs, failures)]
    return outcomes, now - start


def filter_curves(theta: np.ndarray, phi: np.ndarray, outlier_threshold: int = 10 * MS):
    """Prefix outputs of both filters: estimate after k = 1..n samples."""
    theta = np.ascontiguousarray(theta, dtype=np.int64)
    phi = np.ascontiguousarray(phi, dtype=np.int64)
    mean, count = kernels.running_mean(theta, phi, int(outlier_threshold))
    best_theta, best_phi, best_index = kernels.latched_min(theta, phi)
    return {"mean": mean, "mean_count": count, "min": best_theta, "min_phi": best_phi, "min_index": best_index}


def write_samples_csv(samples: Iterable[NtpSample], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t0", "t1", "t2", "t3", "theta", "phi"])
    for s in samples:
        theta, phi = estimate_offset_delay(s)
        w.writerow([s.t0.nanos, s.t1.nanos, s.t2.nanos, s.t3.nanos, theta, phi])


def simulate_handshakes(latency: LatencyModel, n: int, true_offset: int = 0,
                        processing_delay: int = 100 * US, rng: np.random.Generator | None = None,
                        leader_offset: int = 0) -> list[NtpSample]:
    """``n`` back-to-back handshakes between zero-drift clocks ``true_offset`` apart."""
    leader = LocalClock(LEADER, leader_offset)
    client = LocalClock("client-1", leader_offset + true_offset)
    tr = SimulatedTransport(leader, client, latency, rng, processing_delay)
    return [tr.exchange() for _ in range(n)]
