"""Phase alignment of a client frame stream to the leader's stream.

Two methods: reset sampling (restart after a random sleep until the phase
lands inside the tolerance window) and frame injection (insert one long
exposure sized to shift the stream onto the goal).

Tolerance convention: ``AlignConfig.tolerance`` is the window *width* ``eps``.
With the default ``acceptance="centered"`` a phase is accepted when the
centered error is within ``eps/2`` of the goal, so a uniform phase is
accepted with probability exactly ``eps/T``. ``acceptance="raw"`` accepts raw
offsets in ``[0, eps]`` (same probability, one-sided window).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .camera import FrameRecord, InjectionModel, SimCamera, inject_frame, latest_frames, reset_with_sleep
from .timebase import LEADER, MS, S, ClockEstimate, DomainError, Timestamp, convert

RESET_SAMPLING = "reset_sampling"
FRAME_INJECTION = "frame_injection"


class PhaseOffset(NamedTuple):
    raw: int
    centered: int


def phase_offset(ts: Timestamp, goal: Timestamp, period: int) -> PhaseOffset:
    """``(ts - goal) mod T`` as raw [0, T) and centered (-T/2, T/2] values."""
    if ts.domain != goal.domain:
        raise DomainError(f"phase of {ts.domain!r} against goal in {goal.domain!r}")
    if period <= 0:
        raise ValueError("period must be positive")
    raw = (ts.nanos - goal.nanos) % period
    return PhaseOffset(raw, kernels.centered(raw, period))


def expected_reset_iterations(eps: float, period: float, confidence: float = 0.95) -> int:
    """Resets needed to land inside a width-``eps`` window with the given probability."""
    if not 0 < eps < period:
        raise ValueError("need 0 < eps < T")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    r = math.log(1.0 - confidence) / math.log(1.0 - eps / period)
    return max(1, math.ceil(r))


def expected_injection_iterations(sigma: float, eps: float, confidence: float = 0.95) -> int:
    """``4 sigma^2 / eps^2`` injections (at least one).

    The factor 4 is the squared 95% two-sided z-score rounded to 2; other
    confidence levels scale it as ``z^2``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if confidence == 0.95:
        z2 = 4.0
    else:
        from scipy.stats import norm

        z2 = norm.ppf(0.5 + confidence / 2) ** 2
    return max(1, math.ceil(z2 * sigma * sigma / (eps * eps)))


def plan_injection_exposure(delta_needed: int, model: InjectionModel, period: int) -> int:
    """Exposure whose modeled shift is ``delta_needed`` (mod T), snapped to scanlines."""
    if model.gain <= 0:
        raise ValueError("gain must be positive")
    return kernels.plan_exposure(int(delta_needed) % period, period, model.gain, model.scanline_quantum)


@dataclass
class AlignConfig:
    tolerance: int
    goal_phase: Timestamp = field(default_factory=lambda: Timestamp(0, LEADER))
    method: str = FRAME_INJECTION
    sleep_bound: int = 1 * S
    max_iterations: int | None = None
    acceptance: str = "centered"
    measure_frames: int = 3

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.sleep_bound <= 0:
            raise ValueError("sleep_bound must be positive")
        if self.method not in (RESET_SAMPLING, FRAME_INJECTION):
            raise ValueError(f"unknown method {self.method!r}")
        if self.acceptance not in ("centered", "raw"):
            raise ValueError("acceptance must be 'centered' or 'raw'")

    def check_period(self, period: int) -> None:
        if not self.tolerance < period / 2:
            raise ValueError("tolerance must be below T/2")

    def iteration_cap(self, period: int) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        if self.method == RESET_SAMPLING:
            return 3 * expected_reset_iterations(self.tolerance, period)
        return 20

    def accepts(self, offset: PhaseOffset) -> bool:
        if self.acceptance == "raw":
            return offset.raw <= self.tolerance
        return 2 * abs(offset.centered) <= self.tolerance

    def half_width(self) -> int:
        return self.tolerance // 2


@dataclass
class TraceRow:
    iteration: int
    raw_delta: int
    centered_error: int
    action: str


@dataclass
class AlignResult:
    iterations: int
    final_phase_error: int
    converged: bool
    trace: list[TraceRow] = field(default_factory=list)
    final_raw: int = 0
    elapsed: int = 0


def measure_phase(cam: SimCamera, estimate: ClockEstimate, goal: Timestamp, frames: int = 3) -> PhaseOffset:
    """Average phase of the latest frames, in the leader's clock domain.

    Offsets are averaged as centered values relative to the first frame's
    phase so a window straddling the wrap point does not average to T/2.
    """
    recent = latest_frames(cam, frames)
    offsets = [phase_offset(convert(f.start, estimate, goal.domain), goal, cam.period) for f in recent]
    ref = offsets[0].raw
    rel = [kernels.centered((o.raw - ref) % cam.period, cam.period) for o in offsets]
    mean_rel = _round_div(sum(rel), len(rel))
    raw = (ref + mean_rel) % cam.period
    return PhaseOffset(raw, kernels.centered(raw, cam.period))


def _round_div(total: int, n: int) -> int:
    q, r = divmod(abs(total), n)
    if 2 * r >= n:
        q += 1
    return q if total >= 0 else -q


def reset_sampling_align(cam: SimCamera, cfg: AlignConfig, rng: np.random.Generator,
                         estimate: ClockEstimate) -> AlignResult:
    """Reset the camera until its phase lands within tolerance (or the cap is hit)."""
    cfg.check_period(cam.period)
    cap = cfg.iteration_cap(cam.period)
    start = cam.now
    trace = []
    off = measure_phase(cam, estimate, cfg.goal_phase, cfg.measure_frames)
    n = 0
    while not cfg.accepts(off):
        if n >= cap:
            break
        reset_with_sleep(cam, cfg.sleep_bound, rng)
        n += 1
        trace.append(TraceRow(n, off.raw, off.centered, "reset"))
        off = measure_phase(cam, estimate, cfg.goal_phase, cfg.measure_frames)
    return AlignResult(n, off.centered, cfg.accepts(off), trace, off.raw, cam.now - start)


def frame_injection_align(cam: SimCamera, cfg: AlignConfig, rng: np.random.Generator,
                          estimate: ClockEstimate) -> AlignResult:
    """Measure, plan, inject, re-measure until the phase is within tolerance."""
    cfg.check_period(cam.period)
    cap = cfg.iteration_cap(cam.period)
    start = cam.now
    trace = []
    off = measure_phase(cam, estimate, cfg.goal_phase, cfg.measure_frames)
    n = 0
    while not cfg.accepts(off):
        if n >= cap:
            break
        target = _injection_target(cfg, cam.period)
        needed = (target - off.raw) % cam.period
        e = plan_injection_exposure(needed, cam.injection, cam.period)
        inject_frame(cam, e, rng)
        n += 1
        trace.append(TraceRow(n, off.raw, off.centered, f"inject:{e}"))
        off = measure_phase(cam, estimate, cfg.goal_phase, cfg.measure_frames)
    return AlignResult(n, off.centered, cfg.accepts(off), trace, off.raw, cam.now - start)


def _injection_target(cfg: AlignConfig, period: int) -> int:
    # aim at the middle of the acceptance window
    return cfg.tolerance // 2 if cfg.acceptance == "raw" else 0


def align(cam: SimCamera, cfg: AlignConfig, rng: np.random.Generator, estimate: ClockEstimate) -> AlignResult:
    if cfg.method == RESET_SAMPLING:
        return reset_sampling_align(cam, cfg, rng, estimate)
    return frame_injection_align(cam, cfg, rng, estimate)


def write_trace_csv(result: AlignResult, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iteration", "raw_delta_ns", "centered_error_ns", "action"])
    for row in result.trace:
        w.writerow([row.iteration, row.raw_delta, row.centered_error, row.action])


# Batch Monte Carlo routes. Each trial owns a generator and consumes it in the
# same order as the single-camera functions above, so a trial run either way
# gives the same iteration count.

def reset_sampling_batch(rngs: Sequence[np.random.Generator], period: int, tolerance: int,
                         sleep_bound: int = 1 * S, start_latency=(600 * MS, 800 * MS),
                         max_iterations: int | None = None, base: Sequence[int] | None = None):
    """Iteration counts for many reset-sampling runs started from a fresh stream.

    Trial ``i`` starts streaming (one start-latency draw) at reference time
    0 with leader-domain phase offset ``base[i]``; each reset then draws a
    sleep and a start latency. Centered acceptance only.
    """
    cap = max_iterations if max_iterations is not None else 3 * expected_reset_iterations(tolerance, period)
    lo, hi = start_latency
    n = len(rngs)
    steps = np.empty((n, cap + 1), dtype=np.int64)
    for i, rng in enumerate(rngs):
        u = rng.random(1 + 2 * cap)
        steps[i, 0] = lo + int(u[0] * (hi - lo))
        sleeps = (u[1::2] * sleep_bound).astype(np.int64)
        starts = lo + (u[2::2] * (hi - lo)).astype(np.int64)
        steps[i, 1:] = sleeps + starts
    base_arr = np.zeros(n, dtype=np.int64) if base is None else np.asarray(base, dtype=np.int64)
    return kernels.first_acceptance(base_arr, steps, int(period), int(tolerance // 2))


def injection_batch(rngs: Sequence[np.random.Generator], initial_raw: Sequence[int], period: int,
                    tolerance: int, model: InjectionModel, sigma: int, max_iterations: int = 20):
    """Iteration counts and final centered errors for many frame-injection runs."""
    n = len(rngs)
    noise = np.zeros((n, max_iterations), dtype=np.float64)
    if sigma > 0:
        for i, rng in enumerate(rngs):
            noise[i] = rng.standard_normal(max_iterations)
    return kernels.injection_runs(
        np.asarray(initial_raw, dtype=np.int64), noise, int(period), float(model.gain),
        int(model.period_multiple), int(model.scanline_quantum), float(sigma), int(tolerance // 2),
    )


@dataclass
class MisalignmentReport:
    max_phase_error: int
    flagged: list[int]
    dropped_frames: int
    period_deviation: int
    first_flagged: int | None = None

    @property
    def misaligned(self) -> bool:
        return bool(self.flagged)


def detect_misalignment(frames: Sequence[FrameRecord], goal: Timestamp, period: int,
                        eps: int) -> MisalignmentReport:
    """Scan leader-domain frame timestamps for phase error, drops and period drift.

    A frame is flagged when its centered phase error exceeds ``eps``. A gap
    longer than 1.5 T counts ``round(gap/T) - 1`` dropped frames. The period
    deviation is the largest distance of any spacing from its nearest
    multiple of T.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    errors = [phase_offset(f.start, goal, period).centered for f in frames]
    flagged = [i for i, e in enumerate(errors) if abs(e) > eps]
    dropped = 0
    deviation = 0
    for a, b in zip(frames, frames[1:]):
        gap = b.start - a.start
        slots = max(1, _round_div(gap, period))
        if gap > 1.5 * period:
            dropped += slots - 1
        deviation = max(deviation, abs(gap - slots * period))
    return MisalignmentReport(
        max_phase_error=max(abs(e) for e in errors),
        flagged=flagged,
        dropped_frames=dropped,
        period_deviation=deviation,
        first_flagged=flagged[0] if flagged else None,
    )
