"""Restricted Galerkin solves (GAL), residuals (RES) and error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .basis import BSVector, IndexSet, eval_bs_basis
from .legendre import gauss_legendre_rule
from .operator import StiffnessOperator, apply

__all__ = [
    "SingularRestriction",
    "InsufficientKmax",
    "NegativeQuadraticForm",
    "GalerkinSolution",
    "gal",
    "res",
    "residual_kmax",
    "energy_norm",
    "error_bounds_from_residual",
    "rhs_from_function",
    "assemble_rhs",
    "problem_rhs",
    "reference_solution",
]

RES_DELTA = 1e-4


class SingularRestriction(np.linalg.LinAlgError):
    """Cholesky factorization of ``A_Lambda`` failed."""


class InsufficientKmax(RuntimeError):
    """Residual tail bound exceeds 10% of the stored residual norm."""


class NegativeQuadraticForm(ValueError):
    pass


@dataclass(frozen=True)
class GalerkinSolution:
    lam: IndexSet
    u: BSVector
    solve_residual: float


def gal(A: StiffnessOperator, f: BSVector, lam: IndexSet) -> GalerkinSolution:
    """Solve ``A_Lambda u_Lambda = f_Lambda`` by Cholesky factorization."""
    if f.role != "dual":
        raise ValueError("right-hand side must be a dual vector")
    if len(lam) == 0:
        return GalerkinSolution(lam, BSVector({}, "primal"), 0.0)
    idx = lam.as_array()
    M = A.block(idx)
    b = f.values(idx)
    try:
        factor = cho_factor(M, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SingularRestriction(f"singular restriction on |Lambda|={len(lam)}: {exc}") from None
    x = cho_solve(factor, b)
    solve_res = float(np.linalg.norm(M @ x - b))
    return GalerkinSolution(lam, BSVector.from_dense(idx, x, "primal"), solve_res)


def residual_kmax(A: StiffnessOperator, lam: IndexSet, f: BSVector) -> int:
    """Truncation index for RES.

    Banded operators: ``max(Lambda) + band`` (and at least the largest stored
    index of f), which makes the residual exact. Otherwise
    ``max(Lambda) + ceil(ln(1/delta) / eta_L)`` with ``delta = 1e-4``.
    """
    top = lam.max()
    band = A.exact_band
    if band is not None:
        return max(top + band, f.k_max, 2)
    eta = A.decay.eta_L
    return max(top + int(math.ceil(math.log(1.0 / RES_DELTA) / eta)), f.k_max, 2)


def res(A: StiffnessOperator, f: BSVector, sol: GalerkinSolution,
        K_max: Optional[int] = None, check: bool = True) -> BSVector:
    """Residual ``r = f - A u_Lambda`` on indices ``2..K_max`` with tail bound.

    Raises InsufficientKmax when the tail exceeds 10% of the stored norm
    (only when ``check`` is True).
    """
    if K_max is None:
        K_max = residual_kmax(A, sol.lam, f)
    Au = apply(A, sol.u, K_max)
    f_in = {k: v for k, v in f.entries.items() if k <= K_max}
    f_out = math.sqrt(sum(v * v for k, v in f.entries.items() if k > K_max))
    r = BSVector(f_in, "dual", f.tail + f_out) - Au
    if check:
        stored = r.stored_norm()
        if r.tail > 0.1 * stored and r.tail > 0.0:
            raise InsufficientKmax(
                f"tail bound {r.tail:.3e} exceeds 10% of stored norm {stored:.3e} at K_max={K_max}")
    return r


def energy_norm(A: StiffnessOperator, v: BSVector) -> float:
    """``sqrt(v^T A v)`` over the support of v."""
    if not v.entries:
        return 0.0
    idx = np.fromiter(v.entries.keys(), dtype=np.int64)
    x = np.fromiter(v.entries.values(), dtype=float)
    q = float(x @ A.block(idx) @ x)
    if q < -1e-12:
        raise NegativeQuadraticForm(f"v^T A v = {q:.3e} < 0")
    return math.sqrt(max(q, 0.0))


def error_bounds_from_residual(r_norm: Tuple[float, float], alpha_star: float,
                               alpha_upper: float):
    """Certified intervals for the energy and H^1_0 errors from ``||r||``.

    Returns ``((e_lo, e_hi), (h_lo, h_hi))`` with
    ``e = [lo/sqrt(alpha^*), hi/sqrt(alpha_*)]`` and
    ``h = [lo/alpha^*, hi/alpha_*]``.
    """
    lo, hi = r_norm
    if not 0 < alpha_star <= alpha_upper:
        raise ValueError("need 0 < alpha_* <= alpha^*")
    energy = (lo / math.sqrt(alpha_upper), hi / math.sqrt(alpha_star))
    h1 = (lo / alpha_upper, hi / alpha_star)
    return energy, h1


def rhs_from_function(f: Callable, K: int = 64, rel_tol: float = 1e-15,
                      K_limit: int = 4096) -> BSVector:
    """Dual coefficients ``<f, eta_k>`` by Gauss quadrature.

    K doubles until the trailing coefficients drop below ``rel_tol`` times
    the norm; coefficients computed but not kept are folded into the tail.
    """
    while True:
        K2 = 2 * K
        rule = gauss_legendre_rule(K2 + 64)
        E = eval_bs_basis(rule.nodes, K2)
        fx = np.asarray(f(rule.nodes), dtype=float) * np.ones_like(rule.nodes)
        c = E.T @ (rule.weights * fx)
        total = np.linalg.norm(c)
        keep = np.flatnonzero(np.abs(c) > rel_tol * max(total, 1e-300))
        last = int(keep[-1]) if keep.size else 0
        if last < K or K2 >= K_limit:
            kept = c[: last + 1]
            tail = float(np.linalg.norm(c[last + 1:]))
            return BSVector.from_dense(np.arange(2, last + 3), kept, "dual", tail)
        K = K2


def assemble_rhs(A: StiffnessOperator, exact: BSVector, margin: int = 0) -> BSVector:
    """Manufactured right-hand side ``f = A u`` in coefficient space.

    Banded operators yield f exactly; otherwise rows up to
    ``max(supp u) + ceil(ln(1e16)/eta_L) + margin`` are kept and the rest is
    bounded through the decay class.
    """
    band = A.exact_band
    if band is not None:
        K = exact.k_max + band + margin
    else:
        K = exact.k_max + int(math.ceil(math.log(1e16) / A.decay.eta_L)) + margin
    return apply(A, exact, K)


def problem_rhs(A: StiffnessOperator) -> BSVector:
    """Right-hand side described by ``A.problem`` as a dual vector."""
    p = A.problem
    if p.exact is not None:
        return assemble_rhs(A, p.exact)
    if isinstance(p.rhs, BSVector):
        if p.rhs.role != "dual":
            raise ValueError("rhs vector must be dual")
        return p.rhs
    return rhs_from_function(p.rhs)


def reference_solution(A: StiffnessOperator, f: BSVector, rel_tol: float = 1e-12,
                       K_start: Optional[int] = None, K_limit: int = 4096) -> GalerkinSolution:
    """GAL on ``{2..K_ref}`` with K_ref doubled until ``||r|| <= rel_tol ||f||``."""
    fn = f.norm()[1]
    K = K_start or max(f.k_max, 16)
    while True:
        sol = gal(A, f, IndexSet.range(2, K))
        r = res(A, f, sol, check=False)
        if r.norm()[1] <= rel_tol * fn or K >= K_limit:
            return sol
        K *= 2
