"""Built-in test problems and manufactured solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Union

import numpy as np

from .basis import BSVector
from .legendre import gauss_legendre_rule, legendre_transform
from .operator import ProblemSpec

__all__ = ["CatalogEntry", "CATALOG", "manufactured_coefficients", "build_problem", "catalog_names"]

Coefficient = Union[float, list, Callable]


def manufactured_coefficients(du: Callable, n_max: int = 96, rel_tol: float = 1e-15,
                              u: Optional[Callable] = None, window: int = 4) -> BSVector:
    """BS coefficients of u from its derivative: ``u_k = -<Du, phi_{k-1}>``.

    The expansion is cut before the first run of ``window`` consecutive
    coefficients below ``rel_tol`` times the largest (quadrature noise lives
    there), and smaller entries before the cut are dropped too. The
    truncated vector is itself the manufactured exact solution. When ``u`` is
    given its boundary values are checked.
    """
    if u is not None:
        ends = np.asarray(u(np.array([-1.0, 1.0])), dtype=float)
        if np.max(np.abs(ends)) > 1e-12:
            raise ValueError(f"u must vanish at x = -1, 1; got {ends.tolist()}")
    rule = gauss_legendre_rule(n_max + 64)
    c = legendre_transform(du, n_max, rule).coeffs
    scale = np.abs(c).max()
    if scale == 0:
        return BSVector({}, "primal")
    big = np.abs(c) >= rel_tol * scale
    cut = c.size
    for j in range(1, c.size - window + 1):
        if not big[j:j + window].any():
            cut = j
            break
    h = np.flatnonzero(big[:cut])
    h = h[h >= 1]
    return BSVector({int(k) + 1: -float(c[k]) for k in h}, "primal")


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    nu: Coefficient
    sigma: Coefficient
    u: Callable
    du: Callable
    kind: str

    def build(self) -> ProblemSpec:
        exact = manufactured_coefficients(self.du, u=self.u)
        return ProblemSpec(self.nu, self.sigma, exact=exact, name=self.name)


CATALOG: Dict[str, CatalogEntry] = {
    e.name: e for e in [
        CatalogEntry("P1", "nu = 1, sigma = 0, u = sin(pi x): identity operator",
                     1.0, 0.0,
                     lambda x: np.sin(np.pi * x),
                     lambda x: np.pi * np.cos(np.pi * x),
                     "identity"),
        CatalogEntry("P2", "nu = 2 + x, sigma = 1 + x/2, u = (1 - x^2) e^x: banded operator",
                     [2.0, 1.0], [1.0, 0.5],
                     lambda x: (1 - x * x) * np.exp(x),
                     lambda x: (1 - 2 * x - x * x) * np.exp(x),
                     "banded"),
        CatalogEntry("P3", "nu = 1/(2 - x), sigma = 0, u = sin(pi x): dense, exponentially decaying",
                     lambda x: 1.0 / (2.0 - x), 0.0,
                     lambda x: np.sin(np.pi * x),
                     lambda x: np.pi * np.cos(np.pi * x),
                     "dense"),
    ]
}


def catalog_names():
    return list(CATALOG)


def build_problem(name: str) -> ProblemSpec:
    try:
        return CATALOG[name].build()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; catalog has {catalog_names()}") from None
