"""Pure-Python stiffness-entry kernels (fallback for the compiled module).

Both kernels take integer arrays ``rows``/``cols`` of BS indices (>= 2), the
coefficient vector in the *classical* Legendre normalization, and a table
``log_a`` of ``ln A_m`` long enough to cover index ``max(rows + cols)``.
"""

import math

import numpy as np


def _sum_c(p, q, coef, ncoef, log_a):
    # sum_r C^r_{p,q} coef[p+q-2r], C^r = A^r_{p,q} / (2p+2q-4r+1)
    if p < 0 or q < 0:
        return 0.0
    r_hi = min(p, q)
    r_lo = max(0, (p + q - ncoef + 2) // 2)
    total = 0.0
    for r in range(r_lo, r_hi + 1):
        c = coef[p + q - 2 * r]
        if c == 0.0:
            continue
        la = log_a[p - r] + log_a[r] + log_a[q - r] - log_a[p + q - r]
        total += c * math.exp(la) / (2 * p + 2 * q - 2 * r + 1)
    return total


def diffusion_entries(rows, cols, nu, log_a):
    """Entries ``int nu eta_m' eta_n'`` for the index pairs ``(rows[i], cols[i])``."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    nu = np.asarray(nu, dtype=float)
    out = np.empty(rows.size)
    ncoef = nu.size
    for i in range(rows.size):
        p = int(rows[i]) - 1
        q = int(cols[i]) - 1
        out[i] = math.sqrt((2 * p + 1) * (2 * q + 1)) * _sum_c(p, q, nu, ncoef, log_a)
    return out


def reaction_entries(rows, cols, sigma, log_a):
    """Entries ``int sigma eta_m eta_n`` for the index pairs ``(rows[i], cols[i])``."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    sigma = np.asarray(sigma, dtype=float)
    out = np.empty(rows.size)
    ncoef = sigma.size
    for i in range(rows.size):
        m = int(rows[i])
        n = int(cols[i])
        s = (_sum_c(m - 2, n - 2, sigma, ncoef, log_a)
             - _sum_c(m - 2, n, sigma, ncoef, log_a)
             - _sum_c(m, n - 2, sigma, ncoef, log_a)
             + _sum_c(m, n, sigma, ncoef, log_a))
        out[i] = s / math.sqrt((2 * m - 1) * (2 * n - 1))
    return out
