# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stiffness-entry kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


cdef inline double _sum_c(long p, long q, const double[::1] coef, long ncoef,
                          const double[::1] log_a) noexcept nogil:
    cdef long r, r_hi, r_lo
    cdef double c, la, total = 0.0
    if p < 0 or q < 0:
        return 0.0
    r_hi = p if p < q else q
    r_lo = (p + q - ncoef + 2) // 2
    if r_lo < 0:
        r_lo = 0
    for r in range(r_lo, r_hi + 1):
        c = coef[p + q - 2 * r]
        if c == 0.0:
            continue
        la = log_a[p - r] + log_a[r] + log_a[q - r] - log_a[p + q - r]
        total += c * exp(la) / (2 * p + 2 * q - 2 * r + 1)
    return total


def diffusion_entries(rows, cols, nu, log_a):
    cdef const long long[::1] rv = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const long long[::1] cv = np.ascontiguousarray(cols, dtype=np.int64)
    cdef const double[::1] coef = np.ascontiguousarray(nu, dtype=np.float64)
    cdef const double[::1] la = np.ascontiguousarray(log_a, dtype=np.float64)
    cdef Py_ssize_t i, n = rv.shape[0]
    cdef long p, q
    cdef long ncoef = coef.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            p = rv[i] - 1
            q = cv[i] - 1
            ov[i] = sqrt(<double>((2 * p + 1) * (2 * q + 1))) * _sum_c(p, q, coef, ncoef, la)
    return out


def reaction_entries(rows, cols, sigma, log_a):
    cdef const long long[::1] rv = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const long long[::1] cv = np.ascontiguousarray(cols, dtype=np.int64)
    cdef const double[::1] coef = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef const double[::1] la = np.ascontiguousarray(log_a, dtype=np.float64)
    cdef Py_ssize_t i, n = rv.shape[0]
    cdef long m, k
    cdef long ncoef = coef.shape[0]
    cdef double s
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            m = rv[i]
            k = cv[i]
            s = (_sum_c(m - 2, k - 2, coef, ncoef, la)
                 - _sum_c(m - 2, k, coef, ncoef, la)
                 - _sum_c(m, k - 2, coef, ncoef, la)
                 + _sum_c(m, k, coef, ncoef, la))
            ov[i] = s / sqrt(<double>((2 * m - 1) * (2 * k - 1)))
    return out
