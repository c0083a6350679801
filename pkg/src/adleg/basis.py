"""Babuska-Shen basis of H^1_0(-1, 1) and sparse coefficient vectors.

``eta_k = (L_{k-2} - L_k) / sqrt(4k - 2)`` for k >= 2. The eta_k are
orthonormal for ``(u, v) = int u' v'``, so the H^1_0 norm of a function and
the H^-1 norm of a functional (expanded in the dual basis) are plain
Euclidean norms of the coefficient vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Literal, Mapping, Tuple

import numpy as np

from .legendre import LegendreSeries, legendre_vandermonde

Role = Literal["primal", "dual"]

__all__ = [
    "IndexSet",
    "BSVector",
    "bs_to_legendre_derivative",
    "eval_bs_function",
    "eval_bs_basis",
    "eval_bs_basis_derivative",
    "project",
    "norm",
    "mass_matrix_entry",
]


class IndexSet:
    """Finite sorted set of degrees of freedom, all >= 2."""

    __slots__ = ("_idx", "_set")

    def __init__(self, indices: Iterable[int] = ()):
        vals = sorted({int(k) for k in indices})
        if vals and vals[0] < 2:
            raise ValueError(f"index {vals[0]} < 2; indices must lie in N_2")
        self._idx: Tuple[int, ...] = tuple(vals)
        self._set = frozenset(vals)

    @classmethod
    def range(cls, lo: int, hi: int) -> "IndexSet":
        """Indices lo..hi inclusive."""
        return cls(range(max(lo, 2), hi + 1))

    @property
    def indices(self) -> Tuple[int, ...]:
        return self._idx

    def __len__(self) -> int:
        return len(self._idx)

    @property
    def cardinality(self) -> int:
        return len(self._idx)

    def __iter__(self) -> Iterator[int]:
        return iter(self._idx)

    def __contains__(self, k) -> bool:
        return k in self._set

    def __eq__(self, other) -> bool:
        if isinstance(other, IndexSet):
            return self._idx == other._idx
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._idx)

    def __or__(self, other: "IndexSet") -> "IndexSet":
        return IndexSet(self._set | set(other))

    union = __or__

    def __le__(self, other: "IndexSet") -> bool:
        return self._set <= set(other)

    issubset = __le__

    def max(self) -> int:
        return self._idx[-1] if self._idx else 1

    def as_array(self) -> np.ndarray:
        return np.array(self._idx, dtype=np.int64)

    def __repr__(self) -> str:
        if len(self._idx) > 12:
            return f"IndexSet(<{len(self._idx)} indices {self._idx[0]}..{self._idx[-1]}>)"
        return f"IndexSet({list(self._idx)})"


@dataclass(frozen=True)
class BSVector:
    """Sparse coefficient vector in the BS basis (primal) or its dual.

    ``tail`` is a certified bound on the l2 norm of the coefficients that are
    not stored, so the full norm lies in ``[stored_norm, sqrt(stored^2 + tail^2)]``.
    """

    entries: Mapping[int, float] = field(default_factory=dict)
    role: Role = "primal"
    tail: float = 0.0

    def __post_init__(self):
        if self.role not in ("primal", "dual"):
            raise ValueError(f"unknown role {self.role!r}")
        if self.tail < 0:
            raise ValueError("tail bound must be non-negative")
        clean: Dict[int, float] = {}
        for k, v in self.entries.items():
            k = int(k)
            if k < 2:
                raise ValueError(f"index {k} < 2")
            clean[k] = float(v)
        object.__setattr__(self, "entries", dict(sorted(clean.items())))

    # construction helpers
    @classmethod
    def unit(cls, k: int, value: float = 1.0, role: Role = "primal") -> "BSVector":
        return cls({k: value}, role)

    @classmethod
    def from_dense(cls, indices, values, role: Role = "primal", tail: float = 0.0,
                   drop_zeros: bool = False) -> "BSVector":
        idx = [int(k) for k in indices]
        vals = np.asarray(values, dtype=float)
        if drop_zeros:
            return cls({k: v for k, v in zip(idx, vals) if v != 0.0}, role, tail)
        return cls(dict(zip(idx, vals)), role, tail)

    # views
    @property
    def support(self) -> IndexSet:
        return IndexSet(k for k, v in self.entries.items() if v != 0.0)

    @property
    def k_max(self) -> int:
        return max(self.entries) if self.entries else 1

    def get(self, k: int) -> float:
        return self.entries.get(k, 0.0)

    def values(self, indices) -> np.ndarray:
        e = self.entries
        return np.array([e.get(int(k), 0.0) for k in indices], dtype=float)

    def stored_norm(self) -> float:
        if not self.entries:
            return 0.0
        return float(np.linalg.norm(np.fromiter(self.entries.values(), float)))

    def norm(self) -> Tuple[float, float]:
        s = self.stored_norm()
        return s, math.hypot(s, self.tail)

    # arithmetic (tails add: triangle inequality)
    def _combine(self, other: "BSVector", sign: float) -> "BSVector":
        if self.role != other.role:
            raise ValueError("cannot combine primal and dual vectors")
        out = dict(self.entries)
        for k, v in other.entries.items():
            out[k] = out.get(k, 0.0) + sign * v
        return BSVector(out, self.role, self.tail + other.tail)

    def __add__(self, other: "BSVector") -> "BSVector":
        return self._combine(other, 1.0)

    def __sub__(self, other: "BSVector") -> "BSVector":
        return self._combine(other, -1.0)

    def scaled(self, c: float) -> "BSVector":
        return BSVector({k: c * v for k, v in self.entries.items()}, self.role, abs(c) * self.tail)

    def __neg__(self) -> "BSVector":
        return self.scaled(-1.0)

    def with_role(self, role: Role) -> "BSVector":
        return BSVector(self.entries, role, self.tail)

    def __len__(self) -> int:
        return len(self.entries)


def bs_to_legendre_derivative(v: BSVector) -> LegendreSeries:
    """Orthonormal Legendre coefficients of ``Dv``: ``(Dv)_h = -v_{h+1}``."""
    if v.role != "primal":
        raise ValueError("derivative link is defined for primal (H^1_0) vectors only")
    c = np.zeros(max(v.k_max, 1))
    for k, val in v.entries.items():
        c[k - 1] = -val
    return LegendreSeries(c, "orthonormal")


def eval_bs_basis(x, k_max: int) -> np.ndarray:
    """Matrix ``E[i, k-2] = eta_k(x_i)`` for k = 2..k_max."""
    V = legendre_vandermonde(x, k_max)
    k = np.arange(2, k_max + 1)
    return (V[:, k - 2] - V[:, k]) / np.sqrt(4.0 * k - 2.0)


def eval_bs_basis_derivative(x, k_max: int) -> np.ndarray:
    """Matrix ``E[i, k-2] = eta_k'(x_i) = -phi_{k-1}(x_i)``."""
    V = legendre_vandermonde(x, k_max - 1)
    k = np.arange(2, k_max + 1)
    return -V[:, k - 1] * np.sqrt(k - 0.5)


def eval_bs_function(v: BSVector, x):
    """Evaluate ``sum_k v_k eta_k(x)``."""
    if v.role != "primal":
        raise ValueError("only primal vectors represent functions")
    x = np.asarray(x, dtype=float)
    if not v.entries:
        return np.zeros_like(x) if x.ndim else 0.0
    idx = np.array(list(v.entries), dtype=int)
    E = eval_bs_basis(x.ravel(), v.k_max)
    out = E[:, idx - 2] @ np.array(list(v.entries.values()))
    out = out.reshape(x.shape)
    return out if out.ndim else float(out)


def project(v: BSVector, lam: IndexSet) -> BSVector:
    """Restriction ``P_Lambda v``; the tail of the result is exactly 0."""
    return BSVector({k: val for k, val in v.entries.items() if k in lam}, v.role, 0.0)


def norm(v: BSVector) -> Tuple[float, float]:
    """Certified interval for the H^1_0 (primal) or H^-1 (dual) norm."""
    return v.norm()


def mass_matrix_entry(k: int, m: int) -> float:
    """Closed-form ``(eta_k, eta_m)_{L^2}``; the mass matrix is pentadiagonal."""
    if k < m:
        k, m = m, k
    if k == m:
        return 2.0 / ((2 * k - 3) * (2 * k + 1))
    if k == m + 2:
        return -1.0 / ((2 * m + 1) * math.sqrt((2 * m - 1) * (2 * m + 3)))
    return 0.0
