"""Marking, enrichment, coarsening and the ADLEG / PC-ADLEG drivers."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .basis import BSVector, IndexSet
from .galerkin import (InsufficientKmax, error_bounds_from_residual, gal, problem_rhs, res,
                       residual_kmax)
from .operator import DecayClass, ProblemSpec, StiffnessOperator

__all__ = [
    "TailTooLarge",
    "MaxIterExceeded",
    "ThetaTooSmall",
    "InverseDecayUnavailable",
    "AdaptiveConfig",
    "IterationRecord",
    "doerfler",
    "compute_J_theta",
    "enrich",
    "e_doerfler",
    "coarse",
    "adleg_rate",
    "pc_adleg_rate",
    "run_adleg",
    "run_pc_adleg",
    "run",
]

ALGORITHMS = ("adleg", "pc_adleg")


class TailTooLarge(ValueError):
    """Residual tail too large for a certifiably minimal Doerfler set."""


class MaxIterExceeded(RuntimeError):
    def __init__(self, msg, records):
        super().__init__(msg)
        self.records = records


class ThetaTooSmall(ValueError):
    pass


class InverseDecayUnavailable(ValueError):
    pass


def adleg_rate(theta: float, alpha_lower: float, alpha_upper: float) -> float:
    """``sqrt(1 - (alpha_* / alpha^*) theta^2)``."""
    return math.sqrt(1.0 - alpha_lower / alpha_upper * theta * theta)


def pc_adleg_rate(theta: float, alpha_lower: float, alpha_upper: float) -> float:
    """``6 (alpha^* / alpha_*) sqrt(1 - theta^2)``."""
    return 6.0 * alpha_upper / alpha_lower * math.sqrt(1.0 - theta * theta)


@dataclass(frozen=True)
class AdaptiveConfig:
    theta: float
    tol: float
    max_iter: int = 100
    algorithm: str = "adleg"
    coarsening_multiplier: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta={self.theta} must lie in (0, 1)")
        if not self.tol >= 0.0:
            raise ValueError("tol must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if not self.coarsening_multiplier > 0:
            raise ValueError("coarsening_multiplier must be positive")

    def rho(self, alpha_lower: float, alpha_upper: float) -> float:
        if self.algorithm == "adleg":
            return adleg_rate(self.theta, alpha_lower, alpha_upper)
        return pc_adleg_rate(self.theta, alpha_lower, alpha_upper)

    def check_contraction(self, alpha_lower: float, alpha_upper: float) -> float:
        rho = self.rho(alpha_lower, alpha_upper)
        if self.algorithm == "pc_adleg" and not rho < 1.0:
            raise ThetaTooSmall(f"theta={self.theta} too small for contraction: rho={rho:.4f} >= 1")
        return rho


@dataclass
class IterationRecord:
    """State after iteration n (which produces ``u_{n+1}`` and ``r_{n+1}``).

    ``lambda_hat`` equals ``lambda_after`` for ADLEG. Norm-like quantities
    are certified intervals ``(lo, hi)``.
    """

    n: int
    lambda_before: IndexSet
    lambda_hat: IndexSet
    lambda_after: IndexSet
    residual_before: Tuple[float, float]
    residual_norm: Tuple[float, float]
    error_h1: Tuple[float, float]
    error_energy: Tuple[float, float]
    marked_cardinality: int
    J_theta_used: int
    wall_time: float
    u: BSVector = field(repr=False, default=None)
    u_hat: Optional[BSVector] = field(repr=False, default=None)
    residual: Optional[BSVector] = field(repr=False, default=None)
    epsilon: Optional[float] = None
    K_max: int = 0


# --- marking -------------------------------------------------------------------

def doerfler(r: BSVector, theta: float) -> IndexSet:
    """Minimal set with ``||P r|| >= theta ||r||`` (upper norm endpoint).

    Coefficients are taken by decreasing modulus, smaller index first on
    ties.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    stored, upper = r.norm()
    if r.tail > (1.0 - theta) * stored / 10.0:
        raise TailTooLarge(f"tail {r.tail:.3e} > (1-theta) * {stored:.3e} / 10")
    if stored == 0.0:
        return IndexSet()
    keys = np.fromiter(r.entries.keys(), np.int64, len(r.entries))
    vals = np.abs(np.fromiter(r.entries.values(), float, len(r.entries)))
    order = np.lexsort((keys, -vals))
    csum = np.cumsum(vals[order] ** 2)
    target = theta * theta * upper * upper
    n = int(np.searchsorted(csum, target, side="left")) + 1
    n = min(n, order.size)
    return IndexSet(keys[order[:n]].tolist())


def compute_J_theta(theta: float, decay: DecayClass, alpha_lower: float,
                    alpha_upper: float) -> int:
    """Smallest J >= 0 with ``C_Ainv exp(-eta_bar J) <= sqrt((1-theta^2)/(alpha_* alpha^*))``."""
    if decay.is_diagonal:
        return 0
    if decay.eta_L_bar is None:
        raise InverseDecayUnavailable("inverse decay unavailable: invertibility condition unverified")
    bound = math.sqrt((1.0 - theta * theta) / (alpha_lower * alpha_upper))
    if decay.C_Ainv <= bound:
        return 0
    return int(math.ceil(math.log(decay.C_Ainv / bound) / decay.eta_L_bar - 1e-12))


def enrich(lam: IndexSet, J: int) -> IndexSet:
    """All ``k >= 2`` within distance J of some index of ``lam``."""
    if J < 0:
        raise ValueError("J must be >= 0")
    if J == 0 or len(lam) == 0:
        return lam
    out = set()
    for l in lam:
        out.update(range(max(2, l - J), l + J + 1))
    result = IndexSet(out)
    assert len(lam) <= len(result) <= (2 * J + 1) * len(lam)
    return result


def e_doerfler(r: BSVector, theta: float, J_theta: int) -> IndexSet:
    return enrich(doerfler(r, theta), J_theta)


def coarse(w: BSVector, epsilon: float) -> IndexSet:
    """Minimal ``Lambda`` in supp w with ``||w - P w|| <= 2 epsilon``.

    Coefficients are dropped by increasing modulus, larger index first on
    ties.
    """
    items = [(k, v) for k, v in w.entries.items() if v != 0.0]
    if not items:
        return IndexSet()
    keys = np.array([k for k, _ in items], dtype=np.int64)
    vals = np.abs(np.array([v for _, v in items]))
    order = np.lexsort((-keys, vals))
    csum = np.cumsum(vals[order] ** 2)
    n_drop = int(np.searchsorted(csum, (2.0 * epsilon) ** 2, side="right"))
    return IndexSet(keys[order[n_drop:]].tolist())


# --- drivers -------------------------------------------------------------------

def _residual(A: StiffnessOperator, f: BSVector, sol, theta: float, attempts: int = 8):
    """RES with K_max enlarged until the tail is certifiably small."""
    K = residual_kmax(A, sol.lam, f)
    top = sol.lam.max()
    last = None
    for _ in range(attempts):
        try:
            r = res(A, f, sol, K)
        except InsufficientKmax as exc:
            last = exc
        else:
            if r.tail <= (1.0 - theta) * r.stored_norm() / 10.0 or r.norm()[1] == 0.0:
                return r, K
            last = TailTooLarge(f"tail {r.tail:.3e} too large at K_max={K}")
        K = top + 2 * max(K - top, 1)
    # residual at roundoff level: return the best effort, callers compare against tol
    r = res(A, f, sol, K, check=False)
    if r.norm()[1] > 0 and r.tail > r.stored_norm():
        raise last
    return r, K


def _record(n, problem, lam_before, lam_hat, lam_after, r_before, r, sol, marked, J, t0,
            u_hat=None, eps=None, K=0):
    rn = r.norm()
    energy, h1 = error_bounds_from_residual(rn, problem.alpha_star_lower, problem.alpha_star_upper)
    return IterationRecord(
        n=n, lambda_before=lam_before, lambda_hat=lam_hat, lambda_after=lam_after,
        residual_before=r_before, residual_norm=rn, error_h1=h1, error_energy=energy,
        marked_cardinality=marked, J_theta_used=J, wall_time=time.perf_counter() - t0,
        u=sol.u, u_hat=u_hat, residual=r, epsilon=eps, K_max=K)


def _setup(problem, operator, rhs):
    A = operator if operator is not None else StiffnessOperator(problem)
    if A.problem is not problem:
        raise ValueError("operator was built for a different problem")
    f = rhs if rhs is not None else problem_rhs(A)
    return A, f


def run_adleg(problem: ProblemSpec, config: AdaptiveConfig,
              operator: Optional[StiffnessOperator] = None,
              rhs: Optional[BSVector] = None) -> List[IterationRecord]:
    """ADLEG: mark by DOERFLER, solve, repeat while ``||r||_hi > tol``.

    Starts from ``Lambda_0 = {}`` and ``r_0 = f``; returns no records when
    ``||f||`` is already below tol. ``operator`` and ``rhs`` may be passed to
    share an entry cache or a precomputed right-hand side.
    """
    A, f = _setup(problem, operator, rhs)
    theta = config.theta
    r = f
    lam = IndexSet()
    records: List[IterationRecord] = []
    if r.norm()[1] <= config.tol:
        return records
    for n in range(config.max_iter):
        t0 = time.perf_counter()
        marked = doerfler(r, theta)
        new = lam | marked
        sol = gal(A, f, new)
        r_before = r.norm()
        r, K = _residual(A, f, sol, theta)
        records.append(_record(n, problem, lam, new, new, r_before, r, sol, len(marked), 0, t0, K=K))
        lam = new
        if r.norm()[1] <= config.tol:
            return records
    raise MaxIterExceeded(f"max_iter={config.max_iter} exceeded; ||r|| <= {r.norm()[1]:.3e}",
                          records)


def run_pc_adleg(problem: ProblemSpec, config: AdaptiveConfig,
                 operator: Optional[StiffnessOperator] = None,
                 rhs: Optional[BSVector] = None) -> List[IterationRecord]:
    """PC-ADLEG: enriched marking, predictor solve, COARSE, corrector solve.

    COARSE receives ``eps_n = (m / alpha_*) sqrt(1 - theta^2) ||r_n||_hi``
    with m the configured coarsening multiplier (2 by default). The
    contraction precondition ``rho(theta) < 1`` is checked before anything
    else.
    """
    config.check_contraction(problem.alpha_star_lower, problem.alpha_star_upper)
    A, f = _setup(problem, operator, rhs)
    a_lo, a_hi = problem.alpha_star_lower, problem.alpha_star_upper
    theta = config.theta
    J = compute_J_theta(theta, A.decay, a_lo, a_hi)
    r = f
    lam = IndexSet()
    records: List[IterationRecord] = []
    if r.norm()[1] <= config.tol:
        return records
    shrink = config.coarsening_multiplier / a_lo * math.sqrt(1.0 - theta * theta)
    for n in range(config.max_iter):
        t0 = time.perf_counter()
        marked = e_doerfler(r, theta, J)
        lam_hat = lam | marked
        pred = gal(A, f, lam_hat)
        r_before = r.norm()
        eps = shrink * r_before[1]
        new = coarse(pred.u, eps)
        sol = gal(A, f, new)
        r, K = _residual(A, f, sol, theta)
        records.append(_record(n, problem, lam, lam_hat, new, r_before, r, sol, len(marked), J,
                               t0, u_hat=pred.u, eps=eps, K=K))
        lam = new
        if r.norm()[1] <= config.tol:
            return records
    raise MaxIterExceeded(f"max_iter={config.max_iter} exceeded; ||r|| <= {r.norm()[1]:.3e}",
                          records)


def run(problem: ProblemSpec, config: AdaptiveConfig, operator=None, rhs=None):
    """Dispatch on ``config.algorithm``."""
    if config.algorithm == "adleg":
        return run_adleg(problem, config, operator, rhs)
    return run_pc_adleg(problem, config, operator, rhs)
