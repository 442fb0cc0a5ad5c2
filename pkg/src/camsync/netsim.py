"""Asymmetric one-way network latency model.

Each direction draws ``base + Exp(jitter)``; with probability
``spike_probability`` an extra ``Exp(spike_scale)`` buffering delay is added.
The default parameters reproduce the leader/client WiFi link used for the
mean-vs-min filter analysis (per-direction minima ~517/479 us, means of the
outlier-rejected messages ~1133/1878 us, ~0.64% of round trips over 10 ms).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .timebase import MS, US

LEADER_TO_CLIENT = "leader_to_client"
CLIENT_TO_LEADER = "client_to_leader"
DIRECTIONS = (LEADER_TO_CLIENT, CLIENT_TO_LEADER)


@dataclass
class LatencyModel:
    base_leader_to_client: int = 517 * US
    base_client_to_leader: int = 479 * US
    jitter_leader_to_client: int = 616 * US
    jitter_client_to_leader: int = 1422 * US
    spike_probability: float = 0.002
    spike_scale: int = 50 * MS
    seed: int | None = None
    rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("base_leader_to_client", "base_client_to_leader",
                     "jitter_leader_to_client", "jitter_client_to_leader", "spike_scale"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ValueError("spike_probability must be in [0, 1]")
        self.rng = np.random.default_rng(self.seed)

    @classmethod
    def constant(cls, leader_to_client: int, client_to_leader: int | None = None, seed=None):
        if client_to_leader is None:
            client_to_leader = leader_to_client
        return cls(leader_to_client, client_to_leader, 0, 0, 0.0, 0, seed=seed)

    def base(self, direction: str) -> int:
        return self.base_leader_to_client if _check(direction) == LEADER_TO_CLIENT else self.base_client_to_leader

    def jitter(self, direction: str) -> int:
        return self.jitter_leader_to_client if _check(direction) == LEADER_TO_CLIENT else self.jitter_client_to_leader

    def mean(self, direction: str) -> float:
        return self.base(direction) + self.jitter(direction) + self.spike_probability * self.spike_scale

    @property
    def asymmetry(self) -> float:
        """Analytic |mean(client->leader) - mean(leader->client)|."""
        return abs(self.mean(CLIENT_TO_LEADER) - self.mean(LEADER_TO_CLIENT))

    def expected_outlier_fraction(self, threshold: int = 10 * MS) -> float:
        """Probability that a round trip (both one-way legs) exceeds ``threshold``."""
        excess = threshold - self.base_leader_to_client - self.base_client_to_leader
        if excess < 0:
            return 1.0
        p = self.spike_probability
        jit = [self.jitter_leader_to_client, self.jitter_client_to_leader]
        total = 0.0
        for spikes, weight in ((0, (1 - p) ** 2), (1, 2 * p * (1 - p)), (2, p * p)):
            if weight == 0.0:
                continue
            scales = jit + [self.spike_scale] * spikes
            total += weight * _sum_of_exponentials_sf(scales, excess)
        return total


def _check(direction: str) -> str:
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown direction {direction!r}")
    return direction


def _sum_of_exponentials_sf(scales, x: float) -> float:
    """P(sum of independent Exp(scale_i) > x), via the phase-type representation."""
    scales = [s for s in scales if s > 0]
    if not scales:
        return 0.0 if x >= 0 else 1.0
    k = len(scales)
    q = np.zeros((k, k))
    for i, s in enumerate(scales):
        q[i, i] = -1.0 / s
        if i + 1 < k:
            q[i, i + 1] = 1.0 / s
    alpha = np.zeros(k)
    alpha[0] = 1.0
    return float(alpha @ expm(q * x) @ np.ones(k))


def sample_one_way(model: LatencyModel, direction: str, rng: np.random.Generator | None = None) -> int:
    rng = model.rng if rng is None else rng
    latency = model.base(direction)
    scale = model.jitter(direction)
    if scale > 0:
        latency += round(rng.exponential(scale))
    if model.spike_probability > 0 and rng.random() < model.spike_probability:
        latency += round(rng.exponential(model.spike_scale)) if model.spike_scale > 0 else 0
    return latency


def sample_many(model: LatencyModel, direction: str, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """Vectorized draws; a separate stream from repeated :func:`sample_one_way`."""
    rng = model.rng if rng is None else rng
    out = np.full(n, model.base(direction), dtype=np.int64)
    scale = model.jitter(direction)
    if scale > 0:
        out += np.rint(rng.exponential(scale, n)).astype(np.int64)
    if model.spike_probability > 0 and model.spike_scale > 0:
        hit = rng.random(n) < model.spike_probability
        out[hit] += np.rint(rng.exponential(model.spike_scale, int(hit.sum()))).astype(np.int64)
    return out


@dataclass(frozen=True)
class LatencyStats:
    mean: float
    min: int
    max: int
    stdev: float
    count: int


def latency_stats(samples) -> LatencyStats | dict[str, LatencyStats]:
    """Exact sample statistics (population stdev).

    Accepts a flat sequence, or a mapping of direction -> sequence in which
    case a mapping of stats is returned.
    """
    if isinstance(samples, dict):
        return {k: latency_stats(v) for k, v in samples.items()}
    arr = np.asarray(samples, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("latency_stats needs at least one sample")
    return LatencyStats(
        mean=float(arr.mean()),
        min=int(arr.min()),
        max=int(arr.max()),
        stdev=float(arr.std()),
        count=int(arr.size),
    )
