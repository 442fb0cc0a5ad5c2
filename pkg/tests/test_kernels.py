import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest

from camsync import _kernels_py as py
from camsync import kernels

try:
    from camsync import _kernels as cy
except ImportError:  # extension not built; equivalence tests skip
    cy = None

needs_cy = pytest.mark.skipif(cy is None, reason="compiled kernels not built")
ints = st.integers(-(10**15), 10**15)


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


def test_env_forces_python():
    out = subprocess.run([sys.executable, "-c", "from camsync import kernels; print(kernels.BACKEND)"],
                         env={**os.environ, "CAMSYNC_PURE_PYTHON": "1"}, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("x,want", [(0, 0), (1, 1), (2, 1), (3, 2), (-1, -1), (-3, -2), (-4, -2)])
def test_half_away(x, want):
    assert py.half_away(x) == want


@needs_cy
@given(ints, st.integers(1, 10**9))
def test_scalars_match(x, period):
    assert cy.half_away(x) == py.half_away(x)
    raw = x % period
    assert cy.centered(raw, period) == py.centered(raw, period)
    assert cy.snap(abs(x), period % 50_000) == py.snap(abs(x), period % 50_000)


@needs_cy
@settings(deadline=None)
@given(st.lists(st.tuples(ints, st.integers(0, 10**9), st.integers(0, 10**9), st.integers(0, 10**9)),
                min_size=1, max_size=50))
def test_ntp_offsets_match(rows):
    t = np.array([(a, a + b, a + b + c, a + b + c + d) for a, b, c, d in rows], dtype=np.int64)
    cols = [np.ascontiguousarray(t[:, k]) for k in range(4)]
    assert same(cy.ntp_offsets(*cols), py.ntp_offsets(*cols))
    assert same(cy.latched_min(cols[0], cols[1]), py.latched_min(cols[0], cols[1]))
    assert same(cy.running_mean(cols[0], cols[3], 10**15), py.running_mean(cols[0], cols[3], 10**15))


@needs_cy
@settings(deadline=None, max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_first_acceptance_match(seed):
    rng = np.random.default_rng(seed)
    base = rng.integers(-10**9, 10**9, 20)
    steps = rng.integers(0, 2 * 10**9, (20, 30))
    args = (base, steps, 33_000_000, 500_000)
    assert same(cy.first_acceptance(*args), py.first_acceptance(*args))


@needs_cy
@settings(deadline=None, max_examples=50)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0, 11_000]), st.sampled_from([1.0, 2.0]),
       st.sampled_from([0.0, 25_000.0]))
def test_injection_match(seed, quantum, gain, sigma):
    rng = np.random.default_rng(seed)
    delta0 = rng.integers(0, 33_000_000, 20)
    noise = rng.standard_normal((20, 15))
    args = (delta0, noise, 33_000_000, gain, int(gain), quantum, sigma, 10_000)
    assert same(cy.injection_runs(*args), py.injection_runs(*args))
    e = int(rng.integers(33_000_000, 66_000_000))
    assert cy.plan_exposure(e - 33_000_000, 33_000_000, gain, quantum) == \
        py.plan_exposure(e - 33_000_000, 33_000_000, gain, quantum)
    assert cy.injection_shift(e, 33_000_000, gain, 2, sigma, 0.7) == py.injection_shift(e, 33_000_000, gain, 2,
                                                                                         sigma, 0.7)


@needs_cy
@settings(deadline=None, max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(0, 199_999), st.booleans())
def test_overlap_centroids_match(seed, exposure, noisy):
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, 10**13, 10)
    noise = rng.normal(0, 1000, (10, exposure // 200_000 + 2)) if noisy else None
    a = cy.overlap_centroids(starts, exposure, 200_000, 10, noise)
    b = py.overlap_centroids(starts, exposure, 200_000, 10, noise)
    assert same(a, b)


@needs_cy
def test_ks_match_and_scipy():
    u = np.sort(np.random.default_rng(1).random(5000))
    d = py.ks_uniform(u)
    assert cy.ks_uniform(u) == d
    assert d == pytest.approx(kstest(u, "uniform").statistic, abs=1e-12)


def test_ks_against_scipy_pure():
    u = np.sort(np.random.default_rng(2).random(500) ** 1.2)
    assert py.ks_uniform(u) == pytest.approx(kstest(u, "uniform").statistic, abs=1e-12)


@given(st.integers(0, 10**12), st.integers(1, 10**6))
def test_snap_is_nearest_multiple(e, q):
    s = py.snap(e, q)
    assert s % q == 0 and abs(s - e) * 2 <= q


@given(st.integers(0, 32_999_999))
def test_plan_exposure_shifts_to_goal(needed):
    T = 33_000_000
    e = py.plan_exposure(needed, T, 2.0, 11_000)
    shift = py.injection_shift(e, T, 2.0, 2, 0.0, 0.0)
    err = py.centered((shift - needed) % T, T)
    assert abs(err) <= 11_000 + 1


def test_latched_min_latches_earliest():
    theta = np.array([5, 6, 7, 8], dtype=np.int64)
    phi = np.array([10, 9, 9, 12], dtype=np.int64)
    bt, bp, bi = kernels.latched_min(theta, phi)
    assert bi.tolist() == [0, 1, 1, 1] and bt.tolist() == [5, 6, 6, 6]


def test_running_mean_nan_before_first():
    m, c = kernels.running_mean(np.array([1, 2, 3], dtype=np.int64), np.array([50, 5, 5], dtype=np.int64), 10)
    assert np.isnan(m[0]) and m[1:].tolist() == [2.0, 2.5] and c.tolist() == [0, 1, 2]
