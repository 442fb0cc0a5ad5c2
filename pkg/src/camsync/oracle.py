"""Simulated LED-panel time reference.

The panel has a fast 10-column array (one column lit for ``tau`` at a time)
and a slow 10-LED array (each lit for ``10*tau``), so a photo of it encodes
reference time modulo ``100*tau``. Decoding a capture takes the
intensity-weighted centroid of each array's lit portions over the exposure
window and combines the two like a vernier: the slow array picks the
decade, the fast array the position within it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .timebase import REFERENCE, US, Timestamp

# Noiseless decoding is exact up to float rounding, far below 1 ns.
ORACLE_RESOLUTION_NS = 1.0


@dataclass(frozen=True)
class LedPanel:
    tau: int = 200 * US
    fast_columns: int = 10
    slow_columns: int = 10

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def slow_period(self) -> int:
        return self.fast_columns * self.tau

    @property
    def full_period(self) -> int:
        return self.slow_columns * self.slow_period


def _ref_ns(t) -> int:
    if isinstance(t, Timestamp):
        if t.domain != REFERENCE:
            raise ValueError("the panel runs on reference time")
        return t.nanos
    return int(t)


def panel_state(panel: LedPanel, t) -> tuple[int, int]:
    """(fast column, slow column) lit at reference time ``t``."""
    ns = _ref_ns(t)
    return (ns // panel.tau) % panel.fast_columns, (ns // panel.slow_period) % panel.slow_columns


@dataclass(frozen=True)
class CaptureReading:
    fast_column: int
    slow_column: int
    offset: float  # ns into the fast column
    tau: int

    @property
    def fast_fraction(self) -> float:
        return self.offset / self.tau

    def decoded_time(self) -> float:
        """Reference time of the exposure centroid, modulo the panel period."""
        return (self.slow_column * 10 + self.fast_column) * self.tau + self.offset


def _decode(panel: LedPanel, fast_c: float, slow_c: float) -> CaptureReading:
    sp = panel.slow_period
    k = round((slow_c - fast_c) / sp)
    t = (k * sp + fast_c) % panel.full_period
    col = int(t // panel.tau)
    offset = t - col * panel.tau
    return CaptureReading(col % panel.fast_columns, col // panel.fast_columns % panel.slow_columns,
                          offset, panel.tau)


def capture_reading(panel: LedPanel, exposure_start, exposure: int, noise: float = 0.0,
                    rng: np.random.Generator | None = None) -> CaptureReading:
    """Photograph the panel during ``[start, start + exposure]`` and decode it.

    ``noise`` adds zero-mean Gaussian noise to every lit cell's intensity,
    as a fraction of the exposure time.
    """
    if exposure < 0:
        raise ValueError("exposure must be nonnegative")
    if exposure >= panel.tau:
        raise ValueError("exposure must be shorter than tau for sub-column decoding")
    return capture_readings(panel, np.array([_ref_ns(exposure_start)], dtype=np.int64), exposure,
                            noise, rng)[0]


def capture_readings(panel: LedPanel, starts: np.ndarray, exposure: int, noise: float = 0.0,
                     rng: np.random.Generator | None = None) -> list[CaptureReading]:
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    fast_noise = slow_noise = None
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        width = exposure // panel.tau + 2
        fast_noise = rng.normal(0.0, noise * exposure, (len(starts), width))
        slow_noise = rng.normal(0.0, noise * exposure, (len(starts), width))
    fast = kernels.overlap_centroids(starts, int(exposure), panel.tau, panel.fast_columns, fast_noise)
    slow = kernels.overlap_centroids(starts, int(exposure), panel.slow_period, panel.slow_columns, slow_noise)
    if exposure == 0:
        # integer path keeps instantaneous captures exact
        return [_decode_exact(panel, int(s)) for s in starts]
    return [_decode(panel, f, s) for f, s in zip(fast, slow)]


def _decode_exact(panel: LedPanel, t: int) -> CaptureReading:
    t %= panel.full_period
    col = t // panel.tau
    return CaptureReading(col % panel.fast_columns, col // panel.fast_columns, float(t - col * panel.tau),
                          panel.tau)


def wrap_error(err: float, period: float) -> float:
    """Wrap to (-period/2, period/2]."""
    w = err % period
    if w > period / 2:
        w -= period
    return w


def measure_pair_error(panel: LedPanel, reading_a: CaptureReading, reading_b: CaptureReading) -> float:
    """Decoded time of ``a`` minus ``b``, wrapped to (-50 tau, 50 tau].

    Errors that are exact multiples of 100 tau are indistinguishable from 0;
    see :func:`resolve_ambiguity`.
    """
    if reading_a.tau != panel.tau or reading_b.tau != panel.tau:
        raise ValueError("readings come from a different panel configuration")
    return wrap_error(reading_a.decoded_time() - reading_b.decoded_time(), panel.full_period)


def resolve_ambiguity(fine_error: float, fine_period: int, coarse_error: float) -> float:
    """Lift a fine-panel error by the multiple of its period nearest a coarse-panel measurement."""
    k = round((coarse_error - fine_error) / fine_period)
    return fine_error + k * fine_period


@dataclass
class CaptureLog:
    """Ground truth and measurements for one client-vs-leader capture.

    ``requested`` is the leader-domain start of the leader frame the client
    should match; ``actual`` is the client's chosen frame start converted to
    the leader domain with its *estimated* offset.
    """

    theta_est: int
    requested: int
    actual: int
    theta_true: int | None = None
    oracle_error: float | None = None
    scanline_skew: int = 0
    resolution: float = ORACLE_RESOLUTION_NS


@dataclass(frozen=True)
class ErrorDecomposition:
    eps_clock: int
    eps_phase: int
    eps_total: float
    residual: float
    consistent: bool

    @property
    def abs_clock(self) -> int:
        return abs(self.eps_clock)

    @property
    def abs_phase(self) -> int:
        return abs(self.eps_phase)

    @property
    def abs_total(self) -> float:
        return abs(self.eps_total)


def decompose_error(log: CaptureLog) -> ErrorDecomposition:
    """Split a measured capture error into clock and phase parts.

    Signed: ``phase = actual - requested`` and ``clock = theta_est - theta_true``;
    the oracle's client-minus-leader error should equal their sum (plus any
    known scanline skew) to within the oracle resolution.
    """
    if log.theta_true is None or log.oracle_error is None:
        raise ValueError("capture log lacks ground truth (theta_true) or an oracle measurement")
    phase = log.actual - log.requested
    clock = log.theta_est - log.theta_true
    residual = log.oracle_error - (clock + phase + log.scanline_skew)
    return ErrorDecomposition(clock, phase, log.oracle_error, residual, abs(residual) <= log.resolution)
