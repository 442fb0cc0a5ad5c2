"""Experiment configuration: a flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored. Durations must carry a unit
suffix (``ns``, ``us``, ``ms``, ``s``). Unknown keys are an error so typos
do not silently fall back to defaults. See ``configs/default.conf`` for
every key with its default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .camera import InjectionModel
from .clocksync import FilterConfig
from .netsim import LatencyModel
from .oracle import LedPanel
from .phasealign import FRAME_INJECTION, RESET_SAMPLING, AlignConfig
from .timebase import LEADER, MS, S, US, Timestamp, format_duration, parse_duration


def _dur(default: int):
    return field(default=default, metadata={"kind": "duration"})


def _opt_dur():
    return field(default=None, metadata={"kind": "duration", "optional": True})


# Per-device trigger latency (mean, stdev) for the naive baselines. The
# stdev is chosen so the mean |difference| of two devices' draws,
# 2*stdev/sqrt(pi), matches the measured mean absolute errors of the
# wired / Bluetooth / WiFi triggers (103 / 69 / 123 ms).
NAIVE_TRIGGERS = {
    "wired": (300 * MS, 91_281_373),
    "bluetooth": (300 * MS, 61_149_658),
    "wifi": (300 * MS, 109_005_912),
}


@dataclass
class ExperimentConfig:
    devices: int = 2
    trials: int = 239
    seed: int = 1
    workers: int = 1

    clock_offset_spread: int = _dur(1 * S)
    drift_rate: float = 0.0

    latency_base_l2c: int = _dur(517 * US)
    latency_base_c2l: int = _dur(479 * US)
    latency_jitter_l2c: int = _dur(616 * US)
    latency_jitter_c2l: int = _dur(1422 * US)
    spike_probability: float = 0.002
    spike_scale: int = _dur(50 * MS)
    processing_delay: int = _dur(100 * US)
    transport_timeout: int | None = _opt_dur()

    filter: str = "min"
    samples: int = 300
    outlier_threshold: int = _dur(10 * MS)
    target_latency: int | None = _opt_dur()
    interleave: bool = False
    resync_period: int = _dur(0)

    period: int = _dur(33 * MS)
    exposure: int = _dur(10 * MS)
    start_latency_min: int = _dur(600 * MS)
    start_latency_max: int = _dur(800 * MS)
    injection_gain: float = 2.0
    injection_multiple: int = 2
    scanline_quantum: int = _dur(11 * US)
    sigma: int = _dur(25 * US)

    align_method: str = FRAME_INJECTION
    tolerance: int = _dur(20 * US)
    sleep_bound: int = _dur(1 * S)
    max_iterations: int = 0
    acceptance: str = "centered"
    injection_cost: int = _dur(300 * MS)
    reset_overhead: int = _dur(0)

    oracle_tau: int = _dur(200 * US)
    oracle_exposure: int = _dur(100 * US)
    oracle_noise: float = 0.0
    scanline_offset_spread: int = _dur(0)

    naive_mode: str = "none"
    naive_delay_mean: int | None = _opt_dur()
    naive_delay_stdev: int | None = _opt_dur()

    hist_bin_phase: int = _dur(5 * US)
    hist_bin_clock: int = _dur(10 * US)
    hist_bin_total: int = _dur(10 * US)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.devices < 2:
            raise ValueError("devices must be >= 2 (one leader plus clients)")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.filter not in ("mean", "min"):
            raise ValueError("filter must be mean or min")
        if self.align_method not in (FRAME_INJECTION, RESET_SAMPLING):
            raise ValueError(f"align_method must be {FRAME_INJECTION} or {RESET_SAMPLING}")
        if self.naive_mode not in ("none", *NAIVE_TRIGGERS):
            raise ValueError(f"naive_mode must be none or one of {sorted(NAIVE_TRIGGERS)}")
        if self.start_latency_min > self.start_latency_max:
            raise ValueError("start_latency_min exceeds start_latency_max")
        if self.oracle_exposure >= self.oracle_tau:
            raise ValueError("oracle_exposure must be shorter than oracle_tau")
        if self.resync_period < 0:
            raise ValueError("resync_period must be >= 0 (0 disables re-sync)")
        if not 0 < self.tolerance < self.period / 2:
            raise ValueError("tolerance must be in (0, period/2)")
        # the component constructors carry the remaining checks
        self.latency_model()
        self.filter_config()
        self.injection_model()
        self.panel()

    def latency_model(self, seed=None) -> LatencyModel:
        return LatencyModel(self.latency_base_l2c, self.latency_base_c2l, self.latency_jitter_l2c,
                            self.latency_jitter_c2l, self.spike_probability, self.spike_scale, seed=seed)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(kind=self.filter, samples=self.samples, outlier_threshold=self.outlier_threshold,
                            target_latency_threshold=self.target_latency, interleave=self.interleave)

    def injection_model(self) -> InjectionModel:
        return InjectionModel(self.injection_gain, self.injection_multiple, self.scanline_quantum)

    def align_config(self, goal: Timestamp | None = None, method: str | None = None) -> AlignConfig:
        return AlignConfig(
            tolerance=self.tolerance,
            goal_phase=goal if goal is not None else Timestamp(0, LEADER),
            method=method or self.align_method,
            sleep_bound=self.sleep_bound,
            max_iterations=self.max_iterations or None,
            acceptance=self.acceptance,
        )

    def panel(self) -> LedPanel:
        return LedPanel(self.oracle_tau)

    def naive_trigger(self) -> tuple[int, int]:
        mean, stdev = NAIVE_TRIGGERS[self.naive_mode]
        return (self.naive_delay_mean if self.naive_delay_mean is not None else mean,
                self.naive_delay_stdev if self.naive_delay_stdev is not None else stdev)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.metadata.get("kind") == "duration":
                value = format_duration(value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, text: str):
    f = _FIELDS[name]
    if f.metadata.get("optional") and text.lower() in ("none", ""):
        return None
    if f.metadata.get("kind") == "duration":
        return parse_duration(text)
    default = f.default
    if isinstance(default, bool):
        if text.lower() in ("true", "yes", "1", "on"):
            return True
        if text.lower() in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key not in _FIELDS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _coerce(key, value.strip())
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if base is None:
        return ExperimentConfig(**values)
    return dataclasses.replace(base, **values)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def bundled_config(name: str) -> ExperimentConfig:
    """Load ``configs/<name>.conf`` shipped with the package."""
    text = resources.files("camsync").joinpath("configs", f"{name}.conf").read_text()
    return parse_config(text)


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("camsync").joinpath("configs").iterdir()
                  if p.name.endswith(".conf"))
