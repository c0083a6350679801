"""Legendre polynomials, Gauss-Legendre quadrature and product linearization.

Two normalizations coexist in this package and are never mixed silently:

* ``"orthonormal"``: coefficients w.r.t. ``phi_k = sqrt(k + 1/2) L_k``, the
  orthonormal basis of L^2(-1, 1).
* ``"classical"``: coefficients w.r.t. ``L_k`` itself (used for the diffusion
  and reaction coefficients entering the stiffness formulas).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Literal, Optional

import numpy as np

Normalization = Literal["orthonormal", "classical"]

__all__ = [
    "LegendreSeries",
    "QuadratureRule",
    "eval_legendre",
    "legendre_vandermonde",
    "legendre_derivative_vandermonde",
    "gauss_legendre_rule",
    "legendre_transform",
    "adams_A",
    "log_adams_table",
    "adams_product_coeff",
]


@dataclass(frozen=True)
class LegendreSeries:
    """Finite Legendre expansion ``sum_k coeffs[k] * basis_k``.

    Parameters
    ----------
    coeffs : array_like
        Coefficients for k = 0, 1, 2, ...
    normalization : {"orthonormal", "classical"}
        Which basis the coefficients refer to.
    truncation_threshold : float
        Absolute threshold below which trailing coefficients were dropped
        (0 if no truncation took place).
    approximate : bool
        True when the coefficients come from a quadrature that was not
        certified exact for the input.
    """

    coeffs: np.ndarray
    normalization: Normalization = "orthonormal"
    truncation_threshold: float = 0.0
    approximate: bool = False
    warnings: tuple = field(default=(), compare=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if self.normalization not in ("orthonormal", "classical"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def __len__(self):
        return self.coeffs.size

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        return int(nz[-1]) if nz.size else 0

    def _scale(self) -> np.ndarray:
        return np.sqrt(np.arange(self.coeffs.size) + 0.5)

    def to_orthonormal(self) -> "LegendreSeries":
        if self.normalization == "orthonormal":
            return self
        return LegendreSeries(self.coeffs / self._scale(), "orthonormal",
                              self.truncation_threshold, self.approximate, self.warnings)

    def to_classical(self) -> "LegendreSeries":
        if self.normalization == "classical":
            return self
        return LegendreSeries(self.coeffs * self._scale(), "classical",
                              self.truncation_threshold, self.approximate, self.warnings)

    def l2_norm(self) -> float:
        """L^2(-1, 1) norm (Parseval in the orthonormal basis)."""
        return float(np.linalg.norm(self.to_orthonormal().coeffs))

    def truncated(self, threshold: float) -> "LegendreSeries":
        """Drop trailing coefficients with modulus below ``threshold``."""
        c = self.coeffs
        keep = np.flatnonzero(np.abs(c) >= threshold)
        n = int(keep[-1]) + 1 if keep.size else 1
        return LegendreSeries(c[:n], self.normalization, max(threshold, self.truncation_threshold),
                              self.approximate, self.warnings)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        V = legendre_vandermonde(x.ravel(), self.coeffs.size - 1)
        c = self.coeffs if self.normalization == "classical" else self.coeffs * self._scale()
        return (V @ c).reshape(x.shape)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [-1, 1]; exact for degree <= 2*order - 1."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    @property
    def exact_degree(self) -> int:
        return 2 * self.order - 1

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def eval_legendre(k: int, x):
    """Evaluate ``L_k(x)`` by the three-term recurrence.

    ``x`` may be a scalar or an array; the result has the same shape.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if k == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = x.copy()
    for j in range(1, k):
        p_prev, p = p, ((2 * j + 1) * x * p - j * p_prev) / (j + 1)
    return p if p.ndim else float(p)


def legendre_vandermonde(x, n: int) -> np.ndarray:
    """Matrix ``V[i, k] = L_k(x_i)`` for k = 0..n."""
    x = np.asarray(x, dtype=float).ravel()
    V = np.empty((x.size, n + 1))
    V[:, 0] = 1.0
    if n >= 1:
        V[:, 1] = x
    for j in range(1, n):
        V[:, j + 1] = ((2 * j + 1) * x * V[:, j] - j * V[:, j - 1]) / (j + 1)
    return V


def legendre_derivative_vandermonde(x, n: int) -> np.ndarray:
    """Matrix ``D[i, k] = L_k'(x_i)`` via ``L'_{j+1} = L'_{j-1} + (2j+1) L_j``."""
    V = legendre_vandermonde(x, n)
    D = np.zeros_like(V)
    if n >= 1:
        D[:, 1] = 1.0
    for j in range(1, n):
        D[:, j + 1] = D[:, j - 1] + (2 * j + 1) * V[:, j]
    return D


def _newton_legendre_roots(n: int, tol: float = 1e-15, max_iter: int = 100):
    i = np.arange(1, n + 1)
    # Chebyshev-type initial guesses, descending
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    dp = np.ones_like(x)
    for _ in range(max_iter):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for j in range(1, n):
            p0, p1 = p1, ((2 * j + 1) * x * p1 - j * p0) / (j + 1)
        # p1 = L_n, p0 = L_{n-1}
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) <= tol:
            break
    # one more derivative evaluation at the converged roots
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(1, n):
        p0, p1 = p1, ((2 * j + 1) * x * p1 - j * p0) / (j + 1)
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return x, dp


@lru_cache(maxsize=64)
def _gauss_legendre_cached(n: int):
    if n == 1:
        return np.array([0.0]), np.array([2.0])
    x, dp = _newton_legendre_roots(n)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    x = x[::-1].copy()
    w = w[::-1].copy()
    # enforce exact symmetry about 0
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    if n % 2:
        x[n // 2] = 0.0
    return x, w


def gauss_legendre_rule(n: int) -> QuadratureRule:
    """Return the n-point Gauss-Legendre rule (nodes increasing)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x, w = _gauss_legendre_cached(int(n))
    x = x.copy()
    w = w.copy()
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w, int(n))


def legendre_transform(f: Callable, n_max: int, rule: QuadratureRule,
                       degree: Optional[int] = None) -> LegendreSeries:
    """Orthonormal Legendre coefficients ``<f, phi_k>`` for k <= n_max.

    Parameters
    ----------
    f : callable
        Vectorized function on [-1, 1].
    n_max : int
        Highest coefficient index.
    rule : QuadratureRule
        Quadrature used for the inner products.
    degree : int, optional
        Declared polynomial degree of ``f``. When given, the rule must be
        exact for degree ``n_max + degree``; otherwise a ValueError is raised.
        When omitted the result is flagged approximate.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if degree is not None:
        if n_max + degree > rule.exact_degree:
            raise ValueError(
                f"rule of order {rule.order} is exact up to degree {rule.exact_degree}, "
                f"need {n_max + degree}")
        approximate = False
    else:
        approximate = True
    fx = np.asarray(f(rule.nodes), dtype=float) * np.ones_like(rule.nodes)
    V = legendre_vandermonde(rule.nodes, n_max) * np.sqrt(np.arange(n_max + 1) + 0.5)
    coeffs = V.T @ (rule.weights * fx)
    return LegendreSeries(coeffs, "orthonormal", approximate=approximate)


# --- product linearization -------------------------------------------------

def adams_A(m: int):
    """Return ``(ln A_m, sign)`` with ``A_m = (2m)! / (2^m (m!)^2)``."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return 0.0, 1
    return math.lgamma(2 * m + 1) - m * math.log(2.0) - 2.0 * math.lgamma(m + 1), 1


@lru_cache(maxsize=8)
def _log_adams_table_cached(n: int) -> np.ndarray:
    m = np.arange(n + 1, dtype=float)
    from scipy.special import gammaln
    t = gammaln(2 * m + 1) - m * math.log(2.0) - 2.0 * gammaln(m + 1)
    t[0] = 0.0
    t.setflags(write=False)
    return t


def log_adams_table(n: int) -> np.ndarray:
    """Array of ``ln A_m`` for m = 0..n (at least; may be longer)."""
    size = 64
    while size < n:
        size *= 2
    return _log_adams_table_cached(size)


def adams_product_coeff(m: int, n: int, r: int) -> float:
    """Coefficient ``A^r_{m,n}`` in ``L_m L_n = sum_r A^r_{m,n} L_{m+n-2r}``."""
    if not 0 <= r <= min(m, n):
        raise ValueError(f"r={r} outside [0, min(m, n)] = [0, {min(m, n)}]")
    la = (adams_A(m - r)[0] + adams_A(r)[0] + adams_A(n - r)[0]
          - adams_A(n + m - r)[0])
    return math.exp(la) * (2 * n + 2 * m - 4 * r + 1) / (2 * n + 2 * m - 2 * r + 1)
