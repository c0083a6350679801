"""Stiffness operator of ``-(nu u')' + sigma u`` in the Babuska-Shen basis.

Entries are assembled lazily from the classical Legendre coefficients of
``nu`` and ``sigma`` through the product-linearization formulas and memoized
per unordered index pair. Nothing semi-infinite is ever materialized.
"""

from __future__ import annotations

import math
import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .basis import BSVector, IndexSet
from .legendre import (LegendreSeries, adams_A, adams_product_coeff, gauss_legendre_rule,
                       legendre_transform, log_adams_table)

__all__ = [
    "DecayFitError",
    "ProblemSpec",
    "DecayClass",
    "StiffnessOperator",
    "TruncatedOperator",
    "ingest_coefficient",
    "coefficient_B",
    "coefficient_C",
    "entry_diffusion",
    "entry_reaction",
    "inverse_decay_rate",
    "fit_decay_class",
    "truncate",
    "apply",
]

COEFF_REL_TOL = 1e-14
MAX_INGEST_DEGREE = 512
POINCARE = 4.0 / math.pi ** 2  # ||v||_{L2}^2 <= (4/pi^2) ||v'||^2 on (-1, 1)


class DecayFitError(RuntimeError):
    """Raised when the off-diagonal decay of A cannot be fitted."""


def ingest_coefficient(value) -> LegendreSeries:
    """Turn a constant, a list of classical coefficients or a callable into a
    classical-normalization LegendreSeries.

    Callables are transformed with growing degree until the trailing relative
    coefficient drops below 1e-14; a warning is recorded when degree 512 is
    not enough.
    """
    if isinstance(value, LegendreSeries):
        return value.to_classical()
    if callable(value):
        n = 16
        while True:
            rule = gauss_legendre_rule(n + 32)
            s = legendre_transform(value, n, rule)
            c = np.abs(s.coeffs)
            scale = c.max() if c.max() > 0 else 1.0
            tail = c[-4:].max() / scale
            if tail < COEFF_REL_TOL or n >= MAX_INGEST_DEGREE:
                notes = ()
                if tail >= COEFF_REL_TOL:
                    notes = (f"trailing relative coefficient {tail:.2e} at degree {n}",)
                    warnings.warn(notes[0], RuntimeWarning, stacklevel=2)
                s = s.truncated(COEFF_REL_TOL * scale)
                return LegendreSeries(s.coeffs, "orthonormal", s.truncation_threshold,
                                      True, notes).to_classical()
            n *= 2
    c = np.atleast_1d(np.asarray(value, dtype=float))
    return LegendreSeries(c, "classical")


@dataclass
class ProblemSpec:
    """Data of ``-(nu u')' + sigma u = f`` with homogeneous Dirichlet conditions.

    ``nu`` and ``sigma`` use the classical normalization. ``rhs`` is either a
    dual BSVector, a callable ``f(x)``, or None when ``exact`` (a primal
    BSVector, the manufactured solution) is given; in that case the right-hand
    side is ``A @ exact`` computed in coefficient space.
    """

    nu: LegendreSeries
    sigma: LegendreSeries
    rhs: Union[BSVector, Callable, None] = None
    exact: Optional[BSVector] = None
    name: str = "problem"
    alpha_star_lower: float = field(init=False)
    alpha_star_upper: float = field(init=False)
    alpha_upper_max_nu_sigma: float = field(init=False)
    nu_bounds: Tuple[float, float] = field(init=False)
    sigma_bounds: Tuple[float, float] = field(init=False)
    sample_points: int = 2001

    def __post_init__(self):
        self.nu = ingest_coefficient(self.nu)
        self.sigma = ingest_coefficient(self.sigma)
        if (self.rhs is None) == (self.exact is None):
            raise ValueError("give exactly one of rhs and exact")
        x = np.linspace(-1.0, 1.0, self.sample_points)
        nux = self.nu(x)
        sx = self.sigma(x)
        self.nu_bounds = (float(nux.min()), float(nux.max()))
        self.sigma_bounds = (float(sx.min()), float(sx.max()))
        if self.nu_bounds[0] <= 0:
            raise ValueError(f"nu must be positive; sampled min {self.nu_bounds[0]:.3g}")
        if self.sigma_bounds[0] < -1e-14:
            raise ValueError(f"sigma must be non-negative; sampled min {self.sigma_bounds[0]:.3g}")
        sig_max = max(self.sigma_bounds[1], 0.0)
        self.alpha_star_lower = self.nu_bounds[0]
        self.alpha_upper_max_nu_sigma = max(self.nu_bounds[1], sig_max)
        self.alpha_star_upper = self.nu_bounds[1] + POINCARE * sig_max


@dataclass(frozen=True)
class DecayClass:
    """Exponential off-diagonal decay ``|a_mn| <= c_L exp(-eta_L |m - n|)``.

    ``C_A`` and ``C_Ainv`` are empirical amplitudes of the truncation errors
    ``||A - A_J|| <= C_A exp(-eta_L J)`` and the same for the inverse at rate
    ``eta_L_bar``. ``exact_band`` is set when A has finitely many nonzero
    diagonals.

    ``eta_L_bar`` is present only when the invertibility condition held.
    ``eta_L_bar_fitted`` is the rate measured on the inverse of a probe block
    and is always recorded; callers may opt into it explicitly when the
    condition is not verified.
    """

    eta_L: float
    c_L: float
    eta_L_bar: Optional[float]
    C_A: float
    C_Ainv: float
    min_diag: float
    exact_band: Optional[int] = None
    eta_L_bar_fitted: Optional[float] = None
    C_Ainv_fitted: Optional[float] = None

    @property
    def condition_holds(self) -> bool:
        return self.eta_L_bar is not None

    @property
    def is_diagonal(self) -> bool:
        return self.exact_band == 0

    def psi_A(self, J: int) -> float:
        if self.exact_band is not None and J >= self.exact_band:
            return 0.0
        if math.isinf(self.eta_L):
            return 0.0
        return self.C_A * math.exp(-self.eta_L * J)

    def inverse_rate(self, allow_fitted: bool = False) -> Tuple[Optional[float], Optional[float]]:
        """``(eta_L_bar, C_Ainv)``, falling back to the fitted pair if allowed."""
        if self.eta_L_bar is not None:
            return self.eta_L_bar, self.C_Ainv
        if allow_fitted and self.eta_L_bar_fitted is not None:
            return self.eta_L_bar_fitted, self.C_Ainv_fitted
        return None, None


# --- closed-form coefficients --------------------------------------------------

def coefficient_B(m: int, n: int, r: int) -> float:
    """``B^r_{m,n} = sqrt((2m+1)(2n+1)) / (2m+2n-4r+1) * A^r_{m,n}``."""
    return math.sqrt((2 * m + 1) * (2 * n + 1)) / (2 * m + 2 * n - 4 * r + 1) * adams_product_coeff(m, n, r)


def coefficient_C(m: int, n: int, r: int) -> float:
    """``C^r_{m,n} = A^r_{m,n} / (2m+2n-4r+1)``."""
    return adams_product_coeff(m, n, r) / (2 * m + 2 * n - 4 * r + 1)


def _classical(series) -> np.ndarray:
    if isinstance(series, LegendreSeries):
        if series.normalization != "classical":
            raise ValueError("stiffness formulas need classical (L_k) coefficients")
        return series.coeffs
    return np.atleast_1d(np.asarray(series, dtype=float))


def entry_diffusion(m: int, n: int, nu) -> float:
    """``int nu eta_m' eta_n'`` by the B-coefficient sum."""
    c = _classical(nu)
    la = log_adams_table(m + n + 2)
    return float(kernels.diffusion_entries([m], [n], c, la)[0])


def entry_reaction(m: int, n: int, sigma) -> float:
    """``int sigma eta_m eta_n`` by the four C-coefficient sums."""
    c = _classical(sigma)
    la = log_adams_table(m + n + 2)
    return float(kernels.reaction_entries([m], [n], c, la)[0])


def inverse_decay_rate(eta_L: float, c_L: float, min_diag: float) -> Optional[float]:
    """Decay rate of ``A^{-1}`` when ``c_L < (e^eta_L - 1) min_diag / 2``.

    Returns ``-ln z`` with z the root in (0, 1) of
    ``z^2 - (e^{2 eta} + 2 c + 1) / (e^eta (c + 1)) z + 1``, or None when the
    condition fails. The polynomial is stated for a unit diagonal, so it is
    evaluated with ``c = c_L / min_diag`` (the decay rate is scale invariant).
    """
    if math.isinf(eta_L):
        return math.inf
    if not c_L < 0.5 * math.expm1(eta_L) * min_diag:
        return None
    c = c_L / min_diag
    b = (math.exp(2 * eta_L) + 2 * c + 1) / (math.exp(eta_L) * (c + 1))
    # smaller root, written to avoid cancellation
    z = 2.0 / (b + math.sqrt(b * b - 4.0))
    return -math.log(z)


# --- operator ------------------------------------------------------------------

class StiffnessOperator:
    """Lazily assembled semi-infinite matrix ``a_{l,k} = a(eta_k, eta_l)``.

    Parameters
    ----------
    problem : ProblemSpec
    probe_size : int
        Block size used by the decay fit.
    use_exact_band : bool
        When True (default) the finite band implied by the degrees of nu and
        sigma is exploited: entries outside it are zero and residuals are
        computed without truncation. Set False to exercise the decay-based
        tail bounds instead.
    """

    def __init__(self, problem: ProblemSpec, probe_size: int = 40, use_exact_band: bool = True):
        self.problem = problem
        self.nu = _classical(problem.nu)
        self.sigma = _classical(problem.sigma)
        self.probe_size = probe_size
        deg_nu = problem.nu.degree
        has_sigma = bool(np.any(self.sigma != 0.0))
        self.band: int = max(deg_nu, problem.sigma.degree + 2 if has_sigma else 0)
        self.use_exact_band = use_exact_band
        self._cache: Dict[Tuple[int, int], float] = {}
        self._lock = threading.Lock()
        self._decay: Optional[DecayClass] = None

    @property
    def alpha_lower(self) -> float:
        return self.problem.alpha_star_lower

    @property
    def alpha_upper(self) -> float:
        return self.problem.alpha_star_upper

    @property
    def exact_band(self) -> Optional[int]:
        return self.band if self.use_exact_band else None

    @property
    def decay(self) -> DecayClass:
        if self._decay is None:
            self._decay = fit_decay_class(self, self.probe_size)
        return self._decay

    def _compute(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        la = log_adams_table(int(rows.max() + cols.max()) + 2)
        out = kernels.diffusion_entries(rows, cols, self.nu, la)
        if np.any(self.sigma != 0.0):
            out = out + kernels.reaction_entries(rows, cols, self.sigma, la)
        return out

    def entry(self, m: int, n: int) -> float:
        return float(self.block([m], [n])[0, 0])

    def block(self, rows, cols=None) -> np.ndarray:
        """Dense block ``A[rows][:, cols]`` (cols defaults to rows)."""
        rows = np.asarray(list(rows), dtype=np.int64)
        cols = rows if cols is None else np.asarray(list(cols), dtype=np.int64)
        out = np.zeros((rows.size, cols.size))
        if rows.size == 0 or cols.size == 0:
            return out
        if rows.min() < 2 or cols.min() < 2:
            raise ValueError("indices must be >= 2")
        R, C = np.meshgrid(rows, cols, indexing="ij")
        lo = np.minimum(R, C).ravel()
        hi = np.maximum(R, C).ravel()
        mask = (hi - lo) <= self.band  # entries beyond the degree band vanish identically
        cache = self._cache
        vals = np.zeros(lo.size)
        idx = np.flatnonzero(mask)
        missing = []
        for i in idx:
            key = (int(lo[i]), int(hi[i]))
            v = cache.get(key)
            if v is None:
                missing.append(i)
            else:
                vals[i] = v
        if missing:
            missing = np.asarray(missing)
            # several (i, j) may share a key; compute each unique key once
            keys = np.stack([lo[missing], hi[missing]], axis=1)
            uniq, inv = np.unique(keys, axis=0, return_inverse=True)
            computed = self._compute(uniq[:, 0], uniq[:, 1])
            vals[missing] = computed[inv.ravel()]
            with self._lock:
                cache.update(zip(map(tuple, uniq.tolist()), computed.tolist()))
        out[:] = vals.reshape(R.shape)
        return out

    def cache_size(self) -> int:
        return len(self._cache)

    def opnorm_bound(self) -> float:
        """Upper bound for ``||A||`` on l2(N_2) (continuity of a)."""
        return self.alpha_upper


@dataclass(frozen=True)
class TruncatedOperator:
    """View of ``A_J``: entries with ``|l - k| <= J`` kept, the rest zeroed."""

    base: StiffnessOperator
    J: int

    def block(self, rows, cols=None) -> np.ndarray:
        rows = np.asarray(list(rows), dtype=np.int64)
        cols = rows if cols is None else np.asarray(list(cols), dtype=np.int64)
        B = self.base.block(rows, cols)
        B[np.abs(rows[:, None] - cols[None, :]) > self.J] = 0.0
        return B

    def error_bound(self) -> float:
        """``psi_A(J) = C_A exp(-eta_L J)``."""
        return self.base.decay.psi_A(self.J)


def truncate(A: StiffnessOperator, J: int) -> TruncatedOperator:
    if J < 0:
        raise ValueError("J must be >= 0")
    return TruncatedOperator(A, int(J))


def _banded_part(B: np.ndarray, J: int) -> np.ndarray:
    n = B.shape[0]
    i = np.arange(n)
    return np.where(np.abs(i[:, None] - i[None, :]) <= J, B, 0.0)


def _truncation_norms(B: np.ndarray, max_J: int) -> np.ndarray:
    out = np.zeros(max_J + 1)
    for J in range(max_J + 1):
        out[J] = np.linalg.norm(B - _banded_part(B, J), 2)
        if out[J] == 0.0:
            break
    return out


def _offset_maxima(B: np.ndarray) -> np.ndarray:
    n = B.shape[0]
    return np.array([np.abs(np.diagonal(B, j)).max() for j in range(n)])


def _fit_slope(x: np.ndarray, logy: np.ndarray) -> float:
    slope, _ = np.polyfit(x, logy, 1)
    return -float(slope)


def fit_decay_class(A: StiffnessOperator, probe_size: int = 40) -> DecayClass:
    """Fit ``(eta_L, c_L)`` on a leading probe block and derive inverse decay.

    Raises DecayFitError when fewer than 5 off-diagonal magnitudes exceed
    1e-14 and A is not known to be exactly banded.
    """
    if probe_size < 20:
        raise ValueError("probe_size must be >= 20")
    P = probe_size
    idx = np.arange(2, P + 2)
    B = A.block(idx)
    diag = np.diag(B)
    min_diag = float(diag.min())
    m = _offset_maxima(B)
    usable = np.flatnonzero(m[1:] > 1e-14) + 1
    if usable.size == 0:
        return DecayClass(eta_L=math.inf, c_L=0.0, eta_L_bar=math.inf, C_A=0.0,
                          C_Ainv=float(1.0 / min_diag), min_diag=min_diag, exact_band=0,
                          eta_L_bar_fitted=math.inf, C_Ainv_fitted=float(1.0 / min_diag))
    band = A.exact_band
    if usable.size < 5 and band is None:
        raise DecayFitError(f"decay fit failed: only {usable.size} usable off-diagonals")
    pts = usable
    if pts.size < 2:
        pts = np.concatenate([[0], pts])
    eta_L = _fit_slope(pts.astype(float), np.log(m[pts]))
    if not eta_L > 0:
        raise DecayFitError(f"decay fit failed: non-positive rate {eta_L:.3g}")
    c_L = float(np.max(m[usable] * np.exp(eta_L * usable)))

    # amplitudes are measured on a block twice the probe size so that they
    # also cover sections larger than the one the rate was fitted on
    B2 = A.block(np.arange(2, 2 * P + 2))
    g = _truncation_norms(B2, 2 * P - 1)
    Jg = np.flatnonzero(g > 1e-14)
    C_A = float(np.max(g[Jg] * np.exp(eta_L * Jg))) if Jg.size else 0.0

    # inverse: leading block of the inverse of the doubled block
    H = np.linalg.inv(B2)[:P, :P]
    h = _truncation_norms(H, P - 1)
    Jh = np.flatnonzero(h > 1e-13 * max(h[0], 1e-300))

    def amplitude(rate):
        return float(np.max(h[Jh] * np.exp(rate * Jh))) if Jh.size else float(np.abs(H).max())

    eta_fit = C_fit = None
    if Jh.size >= 2:
        rate = _fit_slope(Jh.astype(float), np.log(h[Jh]))
        if rate > 0:
            eta_fit = min(rate, eta_L)
            C_fit = amplitude(eta_fit)
    eta_bar = inverse_decay_rate(eta_L, c_L, min_diag)
    if eta_bar is None:
        warnings.warn("invertibility condition unverified; eta_L_bar absent", RuntimeWarning,
                      stacklevel=2)
        C_Ainv = C_fit if C_fit is not None else amplitude(0.0)
    else:
        C_Ainv = amplitude(eta_bar)
    return DecayClass(eta_L=eta_L, c_L=c_L, eta_L_bar=eta_bar, C_A=C_A, C_Ainv=C_Ainv,
                      min_diag=min_diag, exact_band=band, eta_L_bar_fitted=eta_fit,
                      C_Ainv_fitted=C_fit)


def apply(A: StiffnessOperator, v: BSVector, K_out: int) -> BSVector:
    """``A v`` restricted to indices ``2..K_out`` with a certified tail bound.

    With an exactly banded operator the omitted entries are computed and
    their norm is the tail; otherwise the tail is
    ``C_A exp(-eta_L d) ||v||`` with ``d = K_out - max(supp v)``.
    """
    if v.role != "primal":
        raise ValueError("apply expects a primal vector")
    support = [k for k, x in v.entries.items() if x != 0.0]
    extra_tail = A.opnorm_bound() * v.tail
    if not support:
        return BSVector({}, "dual", extra_tail)
    sup = np.array(support, dtype=np.int64)
    vals = v.values(sup)
    vnorm = float(np.linalg.norm(vals))
    band = A.exact_band
    if band is not None:
        lo = max(2, int(sup.min()) - band)
        hi = int(sup.max()) + band
        rows = np.arange(lo, hi + 1)
        Av = A.block(rows, sup) @ vals
        keep = rows <= K_out
        tail = float(np.linalg.norm(Av[~keep]))
        entries = dict(zip(rows[keep].tolist(), Av[keep].tolist()))
        return BSVector(entries, "dual", tail + extra_tail)
    rows = np.arange(2, K_out + 1)
    Av = A.block(rows, sup) @ vals if rows.size else np.zeros(0)
    dec = A.decay
    d = K_out - int(sup.max())
    tail = A.opnorm_bound() * vnorm
    if d >= 1:
        tail = min(tail, dec.psi_A(d) * vnorm)
    return BSVector(dict(zip(rows.tolist(), Av.tolist())), "dual", tail + extra_tail)
