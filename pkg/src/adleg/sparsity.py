"""Nonlinear approximation toolkit for exponential sparsity classes.

Conventions: ``v*`` is the non-increasing rearrangement of the stored
moduli, indexed from n = 1. ``E_N`` is the best N-term error. All class norms
are evaluated over finite supports and are therefore lower bounds of the
true suprema; results carry the support size they were computed on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

from .basis import BSVector
from .legendre import LegendreSeries

__all__ = [
    "NoExponentialTrend",
    "ClassPropagationUnavailable",
    "SparsityParams",
    "ClassNorm",
    "rearrangement",
    "best_n_term_errors",
    "class_norm_AG",
    "class_norm_lG",
    "gevrey_norm",
    "phi_inverse",
    "n_epsilon",
    "fit_decay",
    "zeta",
    "predict_image_class",
    "predict_residual_class",
    "conforms",
]


class NoExponentialTrend(ValueError):
    pass


class ClassPropagationUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class SparsityParams:
    """Parameters ``(eta, t)`` of ``A_G^{eta,t}`` and a class norm.

    ``r2`` is the coefficient of determination of the fit (None for
    predicted classes); ``extrapolated`` marks predictions outside the
    setting where the propagation formula was derived.
    """

    eta: float
    t: float
    class_norm: float = 1.0
    r2: Optional[float] = None
    support_size: int = 0
    extrapolated: bool = False

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"t={self.t} outside (0, 1]")
        if not self.eta > 0:
            raise ValueError(f"eta={self.eta} must be positive")
        if self.class_norm < 0:
            raise ValueError("class_norm must be non-negative")


class ClassNorm(NamedTuple):
    value: float
    divergent: bool
    support_size: int


def _moduli(v) -> Tuple[np.ndarray, float]:
    if isinstance(v, BSVector):
        return np.abs(np.fromiter(v.entries.values(), float, len(v.entries))), v.tail
    if isinstance(v, LegendreSeries):
        return np.abs(v.coeffs), 0.0
    return np.abs(np.asarray(v, dtype=float).ravel()), 0.0


def rearrangement(v) -> np.ndarray:
    """Non-increasing rearrangement of the nonzero stored moduli."""
    a, _ = _moduli(v)
    a = a[a > 0]
    return -np.sort(-a)


def best_n_term_errors(v) -> np.ndarray:
    """Array of shape ``(S + 1, 2)``: row N holds the interval for ``E_N(v)``.

    ``S`` is the number of nonzero stored entries; the tail bound of v widens
    the upper endpoint.
    """
    s = rearrangement(v)
    _, tail = _moduli(v)
    sq = (s * s)[::-1]
    # suffix sums: lo[N] = sqrt(sum_{n > N} v*_n^2)
    suffix = np.concatenate([np.cumsum(sq)[::-1], [0.0]])
    lo = np.sqrt(suffix)
    hi = np.sqrt(suffix + tail * tail)
    return np.stack([lo, hi], axis=1)


def _divergent(terms: np.ndarray) -> bool:
    k = max(2, int(math.ceil(0.1 * terms.size)))
    last = terms[-k:]
    last = last[np.isfinite(last) & (last > 0)]
    return last.size >= 2 and bool(np.all(np.diff(last) > 0))


def class_norm_AG(v, eta: float, t: float) -> ClassNorm:
    """``sup_N E_N(v) exp(eta N^t)`` over the finite support (upper E_N)."""
    _check(eta, t)
    E = best_n_term_errors(v)[:, 1]
    N = np.arange(E.size, dtype=float)
    terms = E * np.exp(eta * N ** t)
    return ClassNorm(float(terms.max()), _divergent(terms[E > 0]), E.size - 1)


def class_norm_lG(v, eta: float, t: float) -> ClassNorm:
    """``sup_n n^((1-t)/2) exp(eta n^t) v*_n`` over stored entries."""
    _check(eta, t)
    s = rearrangement(v)
    if s.size == 0:
        return ClassNorm(0.0, False, 0)
    n = np.arange(1, s.size + 1, dtype=float)
    terms = n ** ((1.0 - t) / 2.0) * np.exp(eta * n ** t) * s
    return ClassNorm(float(terms.max()), _divergent(terms), s.size)


def gevrey_norm(v: BSVector, eta: float, t: float) -> float:
    """``sqrt(sum_k exp(2 eta k^t) |v_k|^2)`` over stored entries."""
    _check(eta, t)
    if not v.entries:
        return 0.0
    k = np.fromiter(v.entries.keys(), float)
    x = np.fromiter(v.entries.values(), float)
    return float(np.sqrt(np.sum(np.exp(2.0 * eta * k ** t) * x * x)))


def _check(eta, t):
    if not eta > 0:
        raise ValueError("eta must be positive")
    if not 0.0 < t <= 1.0:
        raise ValueError("t must lie in (0, 1]")


def phi_inverse(lam: float, eta: float, t: float) -> float:
    """Inverse of ``phi(N) = exp(-eta N^t)``."""
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    return (math.log(1.0 / lam) / eta) ** (1.0 / t)


def n_epsilon(eps: float, params: SparsityParams) -> int:
    """Bound ``ceil(phi^{-1}(eps / ||v||) + 1)`` on the N needed for ``E_N <= eps``."""
    if not 0 < eps <= params.class_norm:
        raise ValueError(f"eps={eps} must lie in (0, class_norm={params.class_norm}]")
    x = phi_inverse(eps / params.class_norm, params.eta, params.t) + 1.0
    return int(math.ceil(x - 1e-12))


# --- fitting -------------------------------------------------------------------

def _fit_at(n: np.ndarray, logs: np.ndarray, t: float):
    X = np.stack([np.ones_like(n), n ** t], axis=1)
    coef, *_ = np.linalg.lstsq(X, logs, rcond=None)
    resid = logs - X @ coef
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return r2, -float(coef[1]), float(coef[0])


def fit_decay(v, floor: float = 1e-14, min_entries: int = 10) -> SparsityParams:
    """Fit ``|v*_n| ~ L exp(-eta n^t)`` on the rearranged moduli above ``floor``.

    The exponent t is scanned on {0.1, ..., 1.0} and refined with step 0.02
    around the best cell; for each t the pair (log L, eta) comes from linear
    least squares. The returned class norm is ``class_norm_AG`` at the fitted
    parameters, evaluated on the entries above ``floor`` only (entries at
    roundoff level would otherwise dominate the weighted supremum).

    Raises
    ------
    NoExponentialTrend
        Fewer than ``min_entries`` entries above ``floor``, a non-positive
        rate, or a best fit explaining less than 90% of the variance.
    """
    s = rearrangement(v)
    s = s[s > floor]
    if s.size < min_entries:
        raise NoExponentialTrend(f"only {s.size} entries above {floor:g}; need {min_entries}")
    n = np.arange(1, s.size + 1, dtype=float)
    logs = np.log(s)

    def scan(ts):
        best = None
        for t in ts:
            r2, eta, _ = _fit_at(n, logs, float(t))
            if eta > 0 and (best is None or r2 > best[0]):
                best = (r2, eta, float(t))
        return best

    best = scan(np.round(np.arange(1, 11) * 0.1, 10))
    if best is None:
        raise NoExponentialTrend("no positive decay rate on the t-grid")
    t0 = best[2]
    fine = np.round(np.arange(t0 - 0.1, t0 + 0.1 + 1e-9, 0.02), 10)
    fine = fine[(fine > 0) & (fine <= 1.0)]
    best = max(best, scan(fine) or best, key=lambda b: b[0])
    r2, eta, t = best
    if r2 < 0.9:
        raise NoExponentialTrend(f"best fit explains only {100 * r2:.1f}% of the variance")
    norm = class_norm_AG(s, eta, t).value
    return SparsityParams(eta, t, norm, r2, int(s.size))


# --- class propagation ---------------------------------------------------------

def zeta(t: float) -> float:
    """``((1 + t) / 2)^(t / (1 + t))``."""
    return ((1.0 + t) / 2.0) ** (t / (1.0 + t))


def predict_image_class(params: SparsityParams,
                        operator_kind: Union[Tuple[str, float], str],
                        value: Optional[float] = None) -> SparsityParams:
    """Class of ``A v`` for ``v`` in the class ``params``.

    ``operator_kind`` is ``("banded", p)`` or ``("dense", eta_L)``.
    Banded: ``(eta / (2p+1)^t, t)``; dense: ``(zeta(t) eta, t / (1+t))``,
    which requires ``eta < eta_L``.
    """
    if isinstance(operator_kind, str):
        kind, arg = operator_kind, value
    else:
        kind, arg = operator_kind
    eta, t = params.eta, params.t
    if kind == "banded":
        p = int(arg)
        return replace(params, eta=eta / (2 * p + 1) ** t, r2=None)
    if kind == "dense":
        if not eta < float(arg):
            raise ClassPropagationUnavailable(f"need eta={eta:.4g} < eta_L={float(arg):.4g}")
        return replace(params, eta=zeta(t) * eta, t=t / (1.0 + t), r2=None)
    raise ValueError(f"unknown operator kind {kind!r}")


def predict_residual_class(params: SparsityParams, band: Optional[int] = None) -> SparsityParams:
    """Class of the residual for a solution in the class ``params``.

    Dense operators: ``t_bar = t / (1 + 3t)`` and
    ``eta_bar = (1/2)^(t/(1+2t)) zeta(t/(1+2t)) zeta(t/(1+t)) zeta(t) eta``.
    With ``band`` given, the banded propagation is applied three times
    instead and the result is flagged as extrapolated.
    """
    eta, t = params.eta, params.t
    if band is not None:
        return replace(params, eta=eta / (2 * band + 1) ** (3 * t), r2=None, extrapolated=True)
    t1 = t / (1.0 + t)
    t2 = t / (1.0 + 2.0 * t)
    factor = 0.5 ** t2 * zeta(t2) * zeta(t1) * zeta(t)
    return replace(params, eta=factor * eta, t=t / (1.0 + 3.0 * t), r2=None)


def conforms(fitted: SparsityParams, predicted: SparsityParams, t_tol: float = 0.15,
             eta_factor: float = 2.0) -> Tuple[bool, str]:
    """Is ``fitted`` no worse than ``predicted`` within fit tolerance?

    A clearly larger exponent (``t_fit > t_pred + t_tol``) is a sparser class
    and conforms outright; otherwise ``t_fit >= t_pred - t_tol`` and
    ``eta_fit >= eta_pred / eta_factor`` are required.
    """
    if fitted.t > predicted.t + t_tol:
        return True, f"t_fit={fitted.t:.3f} > t_pred={predicted.t:.3f}+{t_tol}"
    ok = fitted.t >= predicted.t - t_tol and fitted.eta >= predicted.eta / eta_factor
    return ok, (f"t_fit={fitted.t:.3f} vs t_pred={predicted.t:.3f}, "
                f"eta_fit={fitted.eta:.4g} vs eta_pred={predicted.eta:.4g}")
