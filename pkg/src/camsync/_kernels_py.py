"""Pure-Python kernels. Reference semantics for ``_kernels.pyx``.

Every function here has a compiled twin with the same name and signature
that must return bit-identical results. Integer inputs are int64 numpy
arrays; loops are plain Python on purpose so the two backends share one
obvious definition.
"""

import math

import numpy as np


def half_away(x):
    """x / 2 rounded half away from zero, for integer x."""
    if x >= 0:
        return (x + 1) // 2
    return -((-x + 1) // 2)


def centered(raw, period):
    """Map a phase in [0, period) to (-period/2, period/2]."""
    if 2 * raw > period:
        return raw - period
    return raw


def ntp_offsets(t0, t1, t2, t3):
    n = len(t0)
    theta = np.empty(n, dtype=np.int64)
    phi = np.empty(n, dtype=np.int64)
    for i in range(n):
        a = int(t1[i]) - int(t0[i])
        b = int(t2[i]) - int(t3[i])
        theta[i] = half_away(a + b)
        phi[i] = (int(t3[i]) - int(t2[i])) + a
    return theta, phi


def latched_min(theta, phi):
    n = len(theta)
    best_theta = np.empty(n, dtype=np.int64)
    best_phi = np.empty(n, dtype=np.int64)
    best_index = np.empty(n, dtype=np.int64)
    j = 0
    for i in range(n):
        if phi[i] < phi[j]:
            j = i
        best_theta[i] = theta[j]
        best_phi[i] = phi[j]
        best_index[i] = j
    return best_theta, best_phi, best_index


def running_mean(theta, phi, threshold):
    n = len(theta)
    mean = np.empty(n, dtype=np.float64)
    count = np.empty(n, dtype=np.int64)
    total = 0
    kept = 0
    for i in range(n):
        if phi[i] <= threshold:
            total += int(theta[i])
            kept += 1
        count[i] = kept
        mean[i] = total / kept if kept else math.nan
    return mean, count


def first_acceptance(base, steps, period, half_width):
    """Reset-sampling scan.

    Row ``i`` of ``steps`` holds the reference-time advances of one trial: the
    initial start latency, then (sleep + start latency) per reset. Returns the
    number of resets before the phase first lands within ``half_width`` of the
    goal (-1 if never) and the centered error at that point (or at the end).
    """
    n, m = steps.shape
    iterations = np.empty(n, dtype=np.int64)
    final = np.empty(n, dtype=np.int64)
    for i in range(n):
        acc = int(base[i])
        iterations[i] = -1
        err = 0
        for j in range(m):
            acc += int(steps[i, j])
            err = centered(acc % period, period)
            if abs(err) <= half_width:
                iterations[i] = j
                break
        final[i] = err
    return iterations, final


def snap(exposure, quantum):
    if quantum <= 0:
        return exposure
    return (2 * exposure + quantum) // (2 * quantum) * quantum


def plan_exposure(needed, period, gain, quantum):
    e = period + math.floor(needed / gain + 0.5)
    e = snap(e, quantum)
    while e < period:
        e += quantum
    return e


def injection_shift(exposure, period, gain, multiple, sigma, z):
    noise = math.floor(sigma * z + 0.5) if sigma > 0 else 0
    return multiple * period + math.floor(gain * (exposure - period) + 0.5) + noise


def injection_runs(delta0, noise, period, gain, multiple, quantum, sigma, half_width):
    """Frame-injection loop over many trials.

    ``delta0`` is the starting raw phase in [0, period); row ``i`` of
    ``noise`` holds the standard-normal draws consumed by successive
    injections of trial ``i``.
    """
    n, m = noise.shape
    iterations = np.empty(n, dtype=np.int64)
    final = np.empty(n, dtype=np.int64)
    for i in range(n):
        delta = int(delta0[i]) % period
        iterations[i] = -1
        for j in range(m + 1):
            err = centered(delta, period)
            if abs(err) <= half_width:
                iterations[i] = j
                break
            if j == m:
                break
            needed = (period - delta) % period
            e = plan_exposure(needed, period, gain, quantum)
            delta = (delta + injection_shift(e, period, gain, multiple, sigma, noise[i, j])) % period
        final[i] = centered(delta, period)
    return iterations, final


def overlap_centroids(starts, exposure, column_period, ncols, noise=None):
    """Intensity-weighted centroid of an exposure window over a column sweep.

    The pattern lights column ``k mod ncols`` during ``[k*cp, (k+1)*cp)``.
    Each lit column contributes its on-time (plus optional additive noise) as
    a weight at the midpoint of its lit portion. Result is wrapped to
    ``[0, ncols*cp)``.
    """
    n = len(starts)
    full = column_period * ncols
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = int(starts[i]) % full
        if exposure == 0:
            out[i] = float(s)
            continue
        end = s + exposure
        wsum = 0.0
        msum = 0.0
        k = s // column_period
        j = 0
        while k * column_period < end:
            lo = max(s, k * column_period)
            hi = min(end, (k + 1) * column_period)
            if hi > lo:
                w = float(hi - lo)
                if noise is not None:
                    w = max(w + noise[i, j], 0.0)
                wsum += w
                msum += w * (0.5 * (lo + hi))
                j += 1
            k += 1
        c = msum / wsum if wsum > 0 else s + 0.5 * exposure
        out[i] = math.fmod(c, full)
    return out


def ks_uniform(sorted_u):
    """One-sample KS statistic of sorted values in [0, 1) against U(0, 1)."""
    n = len(sorted_u)
    d = 0.0
    for i in range(n):
        x = float(sorted_u[i])
        d = max(d, (i + 1) / n - x, x - i / n)
    return d
