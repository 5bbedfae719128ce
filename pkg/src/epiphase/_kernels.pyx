# cython: language_level=3
"""Compiled rolling-window kernels; see ``_pykernels`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, fabs, frexp, ldexp, NAN

cnp.import_array()

cdef double FLAT_RTOL = 1e-12


cdef inline bint _flat(double sd, double mean) noexcept nogil:
    return sd == 0.0 or sd <= FLAT_RTOL * fabs(mean)


def rolling_moments(x, Py_ssize_t window):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0] - window + 1
    if n < 1:
        raise ValueError("series shorter than window")
    mean_a = np.empty(n)
    std_a = np.empty(n)
    skew_a = np.empty(n)
    kurt_a = np.empty(n)
    cdef double[::1] mean = mean_a, std = std_a, skew = skew_a, kurt = kurt_a
    cdef Py_ssize_t t, j
    cdef double s, mu, lo, d, d2, m2, m3, m4, sd, amax, scale
    cdef int e
    with nogil:
        for t in range(n):
            # rescale by a power of two near the max (exact) so tiny values
            # do not square into subnormals
            amax = 0.0
            for j in range(window):
                if fabs(xv[t + j]) > amax:
                    amax = fabs(xv[t + j])
            frexp(amax, &e)
            scale = ldexp(1.0, -e)
            s = 0.0
            for j in range(window):
                s = s + xv[t + j] * scale
            mu = s / window
            # low-order part of the mean; the deviations then carry no rounding bias
            s = 0.0
            for j in range(window):
                s = s + (xv[t + j] * scale - mu)
            lo = s / window
            m2 = 0.0
            for j in range(window):
                d = (xv[t + j] * scale - mu) - lo
                m2 = m2 + d * d
            m2 = m2 / window
            sd = sqrt(m2)
            mean[t] = ldexp(mu + lo, e)
            if _flat(sd, mu):
                std[t] = 0.0
                skew[t] = NAN
                kurt[t] = NAN
                continue
            # standardized deviations avoid underflow in m2 * m2
            m3 = 0.0
            m4 = 0.0
            for j in range(window):
                d = ((xv[t + j] * scale - mu) - lo) / sd
                d2 = d * d
                m3 = m3 + d2 * d
                m4 = m4 + d2 * d2
            std[t] = ldexp(sd, e)
            skew[t] = m3 / window
            kurt[t] = m4 / window
    return mean_a, std_a, skew_a, kurt_a


cdef double _phi(const double* w, Py_ssize_t n, Py_ssize_t k, double r) noexcept nogil:
    cdef Py_ssize_t ntpl = n - k + 1
    cdef Py_ssize_t i, j, q
    cdef double total = 0.0
    cdef Py_ssize_t count
    cdef bint match
    for i in range(ntpl):
        count = 0
        for j in range(ntpl):
            match = True
            for q in range(k):
                if fabs(w[i + q] - w[j + q]) > r:
                    match = False
                    break
            if match:
                count += 1
        total += log(<double>count / ntpl)
    return total / ntpl


def apen(w, Py_ssize_t m, double r):
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = wv.shape[0]
    return _phi(&wv[0], n, m, r) - _phi(&wv[0], n, m + 1, r)


def rolling_apen(x, Py_ssize_t window, Py_ssize_t m, double r_factor):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0] - window + 1
    if n < 1:
        raise ValueError("series shorter than window")
    out_a = np.empty(n)
    cdef double[::1] out = out_a
    cdef Py_ssize_t t, j
    cdef double s, mu, d, m2, sd
    with nogil:
        for t in range(n):
            s = 0.0
            for j in range(window):
                s = s + xv[t + j]
            mu = s / window
            m2 = 0.0
            for j in range(window):
                d = xv[t + j] - mu
                m2 = m2 + d * d
            sd = sqrt(m2 / window)
            if _flat(sd, mu):
                out[t] = 0.0
            else:
                out[t] = _phi(&xv[t], window, m, r_factor * sd) - _phi(&xv[t], window, m + 1, r_factor * sd)
    return out_a


def bin_counts(w, Py_ssize_t bins):
    cdef const double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    counts_a = np.zeros(bins, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_a
    _bin_counts(&wv[0], wv.shape[0], bins, &counts[0])
    return counts_a


cdef void _bin_counts(const double* w, Py_ssize_t n, Py_ssize_t bins, cnp.int64_t* counts) noexcept nogil:
    cdef double lo = w[0], hi = w[0]
    cdef Py_ssize_t j, idx
    for j in range(bins):
        counts[j] = 0
    for j in range(1, n):
        if w[j] < lo:
            lo = w[j]
        if w[j] > hi:
            hi = w[j]
    if hi <= lo:
        counts[0] = n
        return
    for j in range(n):
        idx = <Py_ssize_t>((w[j] - lo) / (hi - lo) * bins)
        if idx < 0:
            idx = 0
        elif idx > bins - 1:
            idx = bins - 1
        counts[idx] += 1


def rolling_shannon(x, Py_ssize_t window, Py_ssize_t bins):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0] - window + 1
    if n < 1:
        raise ValueError("series shorter than window")
    out_a = np.empty(n)
    counts_a = np.zeros(bins, dtype=np.int64)
    cdef double[::1] out = out_a
    cdef cnp.int64_t[::1] counts = counts_a
    cdef Py_ssize_t t, j
    cdef double h, p
    with nogil:
        for t in range(n):
            _bin_counts(&xv[t], window, bins, &counts[0])
            h = 0.0
            for j in range(bins):
                if counts[j] > 0:
                    p = <double>counts[j] / window
                    h = h - p * log(p)
            out[t] = h
    return out_a
