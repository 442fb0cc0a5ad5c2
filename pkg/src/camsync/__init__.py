"""Clock sync, frame phase alignment and an LED-panel oracle for multi-phone camera rigs."""

from .camera import InjectionModel, SimCamera
from .clocksync import FilterConfig, NtpSample, estimate_offset_delay, mean_filter, min_filter
from .config import ExperimentConfig, bundled_config, load_config
from .harness import TrialResult, run_batch, run_trial
from .kernels import BACKEND
from .netsim import LatencyModel
from .oracle import LedPanel, capture_reading, decompose_error
from .phasealign import AlignConfig, align
from .timebase import ClockEstimate, LocalClock, Timestamp

__version__ = "0.1.0"

__all__ = [
    "AlignConfig", "BACKEND", "ClockEstimate", "ExperimentConfig", "FilterConfig", "InjectionModel",
    "LatencyModel", "LedPanel", "LocalClock", "NtpSample", "SimCamera", "Timestamp", "TrialResult", "align",
    "bundled_config", "capture_reading", "decompose_error", "estimate_offset_delay", "load_config",
    "mean_filter", "min_filter", "run_batch", "run_trial",
]
