"""Simulated streaming camera.

The camera latches a frame period ``T`` and emits frames at
``epoch + n*T`` on its local clock. Restarting the stream takes a random
start latency; a high-priority long exposure injected into the stream
shifts every later frame by ``k*T + a*(e - T)`` plus quantization noise.

Internally all times are integer nanoseconds. ``now`` is the camera's
reference-time cursor: the instant of its last action.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernels
from .timebase import MS, REFERENCE, ClockEstimate, LocalClock, Timestamp, convert


class CameraError(RuntimeError):
    pass


@dataclass(frozen=True)
class InjectionModel:
    """Exposure-to-phase-shift response of a device.

    An exposure ``e >= T`` moves the next frame start to
    ``period_multiple*T + gain*(e - T)`` after the injected frame's start.
    The ideal camera is ``gain=1, period_multiple=1``.
    """

    gain: float = 1.0
    period_multiple: int = 1
    scanline_quantum: int = 0

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.period_multiple < 1:
            raise ValueError("period_multiple must be >= 1")
        if self.scanline_quantum < 0:
            raise ValueError("scanline_quantum must be nonnegative")

    @classmethod
    def device(cls, period: int) -> "InjectionModel":
        """The measured phone model: exposure T + d/2 shifts by 2T + d."""
        return cls(gain=2.0, period_multiple=2, scanline_quantum=period // 3000)


@dataclass(frozen=True)
class FrameRecord:
    start: Timestamp
    exposure: int
    sequence: int


@dataclass
class SimCamera:
    clock: LocalClock
    period: int = 33 * MS
    exposure: int = 10 * MS
    start_latency: tuple[int, int] = (600 * MS, 800 * MS)
    injection: InjectionModel = field(default_factory=InjectionModel)
    sigma: int = 0
    running: bool = False
    epoch: int = 0
    epoch_sequence: int = 0
    long_frame: FrameRecord | None = None
    now: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        if not 0 < self.exposure <= self.period:
            raise ValueError("exposure must be in (0, period]")
        lo, hi = self.start_latency
        if not 0 <= lo <= hi:
            raise ValueError("start_latency must satisfy 0 <= lo <= hi")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def domain(self) -> str:
        return self.clock.domain

    def local(self, reference_ns: int) -> int:
        return self.clock.read(Timestamp(reference_ns, REFERENCE)).nanos

    def reference(self, local_ns: int) -> int:
        return self.clock.to_reference(Timestamp(local_ns, self.domain)).nanos

    @property
    def phase(self) -> int:
        """Local-domain stream phase, ``epoch mod T``."""
        return self.epoch % self.period

    def draw_start_latency(self, rng: np.random.Generator) -> int:
        lo, hi = self.start_latency
        return lo + int(rng.random() * (hi - lo))


def _require_running(cam: SimCamera) -> None:
    if not cam.running:
        raise CameraError("camera is not streaming")


def start_stream(cam: SimCamera, reference_now: Timestamp, rng: np.random.Generator) -> FrameRecord:
    if cam.running:
        raise CameraError("camera already streaming")
    if reference_now.domain != REFERENCE:
        raise ValueError("start_stream expects a reference-domain time")
    t = reference_now.nanos + cam.draw_start_latency(rng)
    _restart_at(cam, t)
    return FrameRecord(Timestamp(cam.epoch, cam.domain), cam.exposure, cam.epoch_sequence)


def _restart_at(cam: SimCamera, reference_ns: int) -> None:
    cam.now = reference_ns
    cam.epoch = cam.local(reference_ns)
    cam.epoch_sequence = 0
    cam.long_frame = None
    cam.running = True


def stop_stream(cam: SimCamera) -> None:
    _require_running(cam)
    cam.running = False
    cam.long_frame = None


def reset_with_sleep(cam: SimCamera, sleep_bound: int, rng: np.random.Generator) -> FrameRecord:
    """Stop, sleep U(0, L), restart. The new phase is (U + S) mod T after ``now``."""
    _require_running(cam)
    stop_stream(cam)
    sleep = int(rng.random() * sleep_bound)
    t = cam.now + sleep + cam.draw_start_latency(rng)
    _restart_at(cam, t)
    return FrameRecord(Timestamp(cam.epoch, cam.domain), cam.exposure, 0)


def inject_frame(cam: SimCamera, exposure: int, rng: np.random.Generator) -> int:
    """Insert one long exposure into the stream; returns the new local phase.

    The long frame takes the next frame slot at or after ``now``. The exposure
    is snapped to the scanline quantum, and the following frame starts
    ``k*T + a*(e - T) + N(0, sigma)`` after the long frame's start.
    """
    _require_running(cam)
    if exposure < cam.period:
        raise ValueError("injected exposure must be at least one period")
    inj = cam.injection
    e = kernels.snap(int(exposure), inj.scanline_quantum)
    while e < cam.period:
        e += inj.scanline_quantum
    z = rng.standard_normal() if cam.sigma > 0 else 0.0
    shift = kernels.injection_shift(e, cam.period, inj.gain, inj.period_multiple, float(cam.sigma), float(z))
    local_now = cam.local(cam.now)
    n = -((cam.epoch - local_now) // cam.period)  # ceil((local_now - epoch) / T)
    n = max(n, 0)
    slot = cam.epoch + n * cam.period
    seq = cam.epoch_sequence + n
    cam.long_frame = FrameRecord(Timestamp(slot, cam.domain), e, seq)
    cam.epoch = slot + shift
    cam.epoch_sequence = seq + 1
    cam.now = cam.reference(cam.epoch)
    return cam.phase


def frames_until(cam: SimCamera, until: Timestamp) -> list[FrameRecord]:
    """Frames of the current stream segment starting at or before ``until``.

    A segment begins at the last start or reset; after an injection it begins
    with the long frame, followed by period-``T`` frames at the new phase.
    """
    _require_running(cam)
    if until.domain != cam.domain:
        until = cam.clock.read(until) if until.domain == REFERENCE else None
        if until is None:
            raise ValueError("until must be in the camera's local or the reference domain")
    out = []
    if cam.long_frame is not None and cam.long_frame.start.nanos <= until.nanos:
        out.append(cam.long_frame)
    if until.nanos >= cam.epoch:
        count = (until.nanos - cam.epoch) // cam.period + 1
        for j in range(count):
            out.append(FrameRecord(Timestamp(cam.epoch + j * cam.period, cam.domain),
                                   cam.exposure, cam.epoch_sequence + j))
    return out


next_frame = frames_until


def latest_frames(cam: SimCamera, count: int = 3) -> list[FrameRecord]:
    """The last ``count`` regular frames that have started by ``now`` (at least the epoch frame)."""
    _require_running(cam)
    local_now = max(cam.local(cam.now), cam.epoch)
    last = (local_now - cam.epoch) // cam.period
    first = max(0, last - count + 1)
    return [FrameRecord(Timestamp(cam.epoch + j * cam.period, cam.domain), cam.exposure,
                        cam.epoch_sequence + j) for j in range(first, last + 1)]


def write_frames_csv(frames: Iterable[FrameRecord], estimate: ClockEstimate | None, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["sequence", "local_start_ns", "leader_domain_start_ns", "exposure_ns"])
    for f in frames:
        leader = convert(f.start, estimate, estimate.leader_domain).nanos if estimate else f.start.nanos
        w.writerow([f.sequence, f.start.nanos, leader, f.exposure])
