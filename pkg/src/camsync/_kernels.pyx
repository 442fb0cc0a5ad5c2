# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=False
"""Compiled kernels; see _kernels_py.py for the reference definitions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fmod, NAN
from libc.stdint cimport int64_t

cnp.import_array()


cdef inline int64_t _half_away(int64_t x) nogil:
    if x >= 0:
        return (x + 1) // 2
    return -((-x + 1) // 2)


cdef inline int64_t _centered(int64_t raw, int64_t period) nogil:
    if 2 * raw > period:
        return raw - period
    return raw


cdef inline int64_t _llabs(int64_t x) nogil:
    return -x if x < 0 else x


def half_away(x):
    return _half_away(x)


def centered(raw, period):
    return _centered(raw, period)


def ntp_offsets(const int64_t[:] t0, const int64_t[:] t1, const int64_t[:] t2, const int64_t[:] t3):
    cdef Py_ssize_t n = t0.shape[0], i
    theta_arr = np.empty(n, dtype=np.int64)
    phi_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[:] theta = theta_arr
    cdef int64_t[:] phi = phi_arr
    cdef int64_t a, b
    with nogil:
        for i in range(n):
            a = t1[i] - t0[i]
            b = t2[i] - t3[i]
            theta[i] = _half_away(a + b)
            phi[i] = (t3[i] - t2[i]) + a
    return theta_arr, phi_arr


def latched_min(const int64_t[:] theta, const int64_t[:] phi):
    cdef Py_ssize_t n = theta.shape[0], i, j = 0
    bt_arr = np.empty(n, dtype=np.int64)
    bp_arr = np.empty(n, dtype=np.int64)
    bi_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[:] bt = bt_arr
    cdef int64_t[:] bp = bp_arr
    cdef int64_t[:] bi = bi_arr
    with nogil:
        for i in range(n):
            if phi[i] < phi[j]:
                j = i
            bt[i] = theta[j]
            bp[i] = phi[j]
            bi[i] = j
    return bt_arr, bp_arr, bi_arr


def running_mean(theta, phi, threshold):
    # exact integer totals: sums of 10^4 samples of 10^9 ns stay far inside int64
    cdef const int64_t[:] th = theta
    cdef const int64_t[:] ph = phi
    cdef int64_t thr = threshold
    cdef Py_ssize_t n = th.shape[0], i
    mean_arr = np.empty(n, dtype=np.float64)
    count_arr = np.empty(n, dtype=np.int64)
    cdef double[:] mean = mean_arr
    cdef int64_t[:] count = count_arr
    cdef int64_t total = 0, kept = 0
    with nogil:
        for i in range(n):
            if ph[i] <= thr:
                total += th[i]
                kept += 1
            count[i] = kept
            if kept:
                mean[i] = <double>total / <double>kept
            else:
                mean[i] = NAN
    return mean_arr, count_arr


cdef inline int64_t _pymod(int64_t a, int64_t b) nogil:
    cdef int64_t r = a % b
    if r < 0:
        r += b
    return r


def first_acceptance(const int64_t[:] base, const int64_t[:, :] steps, int64_t period, int64_t half_width):
    cdef Py_ssize_t n = steps.shape[0], m = steps.shape[1], i, j
    it_arr = np.empty(n, dtype=np.int64)
    fin_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[:] it = it_arr
    cdef int64_t[:] fin = fin_arr
    cdef int64_t acc, err
    with nogil:
        for i in range(n):
            acc = base[i]
            it[i] = -1
            err = 0
            for j in range(m):
                acc = acc + steps[i, j]
                err = _centered(_pymod(acc, period), period)
                if _llabs(err) <= half_width:
                    it[i] = j
                    break
            fin[i] = err
    return it_arr, fin_arr


cdef inline int64_t _snap(int64_t e, int64_t q) nogil:
    if q <= 0:
        return e
    return ((2 * e + q) // (2 * q)) * q


cdef inline int64_t _plan(int64_t needed, int64_t period, double gain, int64_t q) nogil:
    cdef int64_t e = period + <int64_t>floor(<double>needed / gain + 0.5)
    e = _snap(e, q)
    while e < period:
        e += q
    return e


cdef inline int64_t _shift(int64_t e, int64_t period, double gain, int64_t multiple,
                           double sigma, double z) nogil:
    cdef int64_t noise = 0
    if sigma > 0:
        noise = <int64_t>floor(sigma * z + 0.5)
    return multiple * period + <int64_t>floor(gain * <double>(e - period) + 0.5) + noise


def snap(exposure, quantum):
    return _snap(exposure, quantum)


def plan_exposure(needed, period, gain, quantum):
    return _plan(needed, period, gain, quantum)


def injection_shift(exposure, period, gain, multiple, sigma, z):
    return _shift(exposure, period, gain, multiple, sigma, z)


def injection_runs(const int64_t[:] delta0, const double[:, :] noise, int64_t period, double gain,
                   int64_t multiple, int64_t quantum, double sigma, int64_t half_width):
    cdef Py_ssize_t n = noise.shape[0], m = noise.shape[1], i, j
    it_arr = np.empty(n, dtype=np.int64)
    fin_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[:] it = it_arr
    cdef int64_t[:] fin = fin_arr
    cdef int64_t delta, err, needed, e
    with nogil:
        for i in range(n):
            delta = _pymod(delta0[i], period)
            it[i] = -1
            for j in range(m + 1):
                err = _centered(delta, period)
                if _llabs(err) <= half_width:
                    it[i] = j
                    break
                if j == m:
                    break
                needed = _pymod(period - delta, period)
                e = _plan(needed, period, gain, quantum)
                delta = _pymod(delta + _shift(e, period, gain, multiple, sigma, noise[i, j]), period)
            fin[i] = _centered(delta, period)
    return it_arr, fin_arr


def overlap_centroids(const int64_t[:] starts, int64_t exposure, int64_t column_period, int64_t ncols,
                      noise=None):
    cdef Py_ssize_t n = starts.shape[0], i, j
    cdef int64_t full = column_period * ncols
    cdef int64_t s, end, k, lo, hi
    cdef double w, wsum, msum, c
    cdef bint has_noise = noise is not None
    cdef const double[:, :] nz
    if has_noise:
        nz = noise
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[:] out = out_arr
    for i in range(n):
        s = _pymod(starts[i], full)
        if exposure == 0:
            out[i] = <double>s
            continue
        end = s + exposure
        wsum = 0.0
        msum = 0.0
        k = s // column_period
        j = 0
        while k * column_period < end:
            lo = s if s > k * column_period else k * column_period
            hi = end if end < (k + 1) * column_period else (k + 1) * column_period
            if hi > lo:
                w = <double>(hi - lo)
                if has_noise:
                    w = w + nz[i, j]
                    if w < 0.0:
                        w = 0.0
                wsum += w
                msum += w * (0.5 * <double>(lo + hi))
                j += 1
            k += 1
        if wsum > 0:
            c = msum / wsum
        else:
            c = <double>s + 0.5 * <double>exposure
        out[i] = fmod(c, <double>full)
    return out_arr


def ks_uniform(const double[:] sorted_u):
    cdef Py_ssize_t n = sorted_u.shape[0], i
    cdef double d = 0.0, x, a, b
    with nogil:
        for i in range(n):
            x = sorted_u[i]
            a = <double>(i + 1) / <double>n - x
            b = x - <double>i / <double>n
            if a > d:
                d = a
            if b > d:
                d = b
    return d
