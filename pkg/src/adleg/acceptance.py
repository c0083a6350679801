"""Acceptance suite: ten criteria with pinned tolerances.

Each ``criterion_k`` returns ``(passed, detail)``; ``run_all`` times them and
wraps the results. Shared by ``adleg check`` and the test-suite.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .adaptive import coarse, doerfler
from .basis import BSVector, eval_bs_basis, eval_bs_basis_derivative, mass_matrix_entry
from .experiment import parse_config, run_experiment
from .legendre import gauss_legendre_rule, legendre_vandermonde, log_adams_table
from .operator import StiffnessOperator
from .problems import CATALOG, build_problem
from .sparsity import (SparsityParams, best_n_term_errors, class_norm_AG, fit_decay, n_epsilon,
                       predict_residual_class)

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_all"]

SEED = 20240611
PC_THETA = {"P1": 0.999, "P2": 0.9995, "P3": 0.999}
ADLEG_THETAS = (0.3, 0.5, 0.8)
FINAL_ERROR = 1e-9


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.title}: {self.detail} ({self.seconds:.2f} s)"


def _subset_masks(s: int) -> np.ndarray:
    return ((np.arange(2 ** s)[:, None] >> np.arange(s)[None, :]) & 1).astype(bool)


# --- 1 ---------------------------------------------------------------------

def criterion_1() -> Tuple[bool, str]:
    K = 100
    rule = gauss_legendre_rule(K + 8)
    D = eval_bs_basis_derivative(rule.nodes, K)
    G = D.T @ (rule.weights[:, None] * D)
    err_h1 = float(np.abs(G - np.eye(G.shape[0])).max())
    E = eval_bs_basis(rule.nodes, K)
    M = E.T @ (rule.weights[:, None] * E)
    ks = np.arange(2, K + 1)
    closed = np.array([[mass_matrix_entry(k, m) for m in ks] for k in ks])
    err_l2 = float(np.abs(M - closed).max())
    spot = max(abs(M[0, 0] - 0.4), abs(M[0, 2] + 1 / (5 * math.sqrt(21))))
    ok = err_h1 <= 1e-11 and err_l2 <= 1e-12 and spot <= 1e-12
    return ok, f"H1 Gram err {err_h1:.2e} (<=1e-11), L2 Gram err {err_l2:.2e} (<=1e-12), spot {spot:.1e}"


# --- 2 ---------------------------------------------------------------------

def _log_B(M: int):
    la = log_adams_table(2 * M + 2)
    m = np.arange(M + 1)[:, None, None]
    n = np.arange(M + 1)[None, :, None]
    r = np.arange(M + 1)[None, None, :]
    valid = r <= np.minimum(m, n)
    mr = np.where(valid, m - r, 0)
    nr = np.where(valid, n - r, 0)
    lc = la[mr] + la[np.where(valid, r, 0)] + la[nr] - la[np.where(valid, m + n - r, 0)]
    return m, n, r, valid, lc


def criterion_2() -> Tuple[bool, str]:
    rule = gauss_legendre_rule(100)
    V = legendre_vandermonde(rule.nodes, 80)
    la = log_adams_table(100)
    worst = 0.0
    for m in range(41):
        for n in range(m + 1):
            r = np.arange(min(m, n) + 1)
            A = np.exp(la[m - r] + la[r] + la[n - r] - la[m + n - r]) \
                * (2 * n + 2 * m - 4 * r + 1) / (2 * n + 2 * m - 2 * r + 1)
            approx = V[:, m + n - 2 * r] @ A
            worst = max(worst, float(np.abs(V[:, m] * V[:, n] - approx).max()))
    m, n, r, valid, lc = _log_B(200)
    B = np.sqrt((2 * m + 1) * (2 * n + 1)) * np.exp(lc) / (2 * m + 2 * n - 2 * r + 1)
    bmax = float(np.where(valid, B, 0.0).max())
    # scaled C terms C^r_{m-k, n-j} / sqrt((2m-1)(2n-1)), k, j in {0, 2}
    C = np.where(valid, np.exp(lc) / (2 * m + 2 * n - 2 * r + 1), 0.0)
    cmax = 0.0
    for k, j in itertools.product((0, 2), repeat=2):
        mm = np.arange(2, 201)
        sub = C[mm[:, None] - k, (mm[None, :] - j)]
        scale = np.sqrt((2 * mm[:, None] - 1) * (2 * mm[None, :] - 1))
        cmax = max(cmax, float((sub.max(axis=2) / scale).max()))
    ok = worst <= 1e-10 and bmax <= 10 and cmax <= 10
    return ok, f"product err {worst:.2e} (<=1e-10), max B {bmax:.4f} (<=10), max scaled C {cmax:.4f}"


# --- 3 ---------------------------------------------------------------------

_TRUE_COEFFS = {
    "P2": (lambda x: 2 + x, lambda x: 1 + x / 2),
    "P3": (lambda x: 1 / (2 - x), lambda x: 0 * x),
}


def quadrature_block(nu: Callable, sigma: Callable, K: int, n_nodes: int = 200) -> np.ndarray:
    """``int nu eta_m' eta_n' + sigma eta_m eta_n`` for 2 <= m, n <= K by Gauss quadrature."""
    rule = gauss_legendre_rule(n_nodes)
    x, w = rule.nodes, rule.weights
    D = eval_bs_basis_derivative(x, K)
    E = eval_bs_basis(x, K)
    return D.T @ ((w * nu(x))[:, None] * D) + E.T @ ((w * sigma(x))[:, None] * E)


def criterion_3() -> Tuple[bool, str]:
    parts = []
    ok = True
    for name in ("P2", "P3"):
        A = StiffnessOperator(build_problem(name))
        idx = np.arange(2, 61)
        B = A.block(idx)
        Q = quadrature_block(*_TRUE_COEFFS[name], 60)
        err = float(np.abs(B - Q).max())
        sym = float(np.abs(B - B.T).max())
        ok &= err <= 1e-10 and sym <= 1e-12 * np.abs(B).max()
        parts.append(f"{name} max err {err:.2e}")
    return ok, ", ".join(parts) + " (<=1e-10)"


# --- 4 ---------------------------------------------------------------------

def _slope(x, y) -> float:
    return -float(np.polyfit(np.asarray(x, float), np.log(np.asarray(y, float)), 1)[0])


def criterion_4() -> Tuple[bool, str]:
    A = StiffnessOperator(build_problem("P3"))
    nu = np.abs(A.nu)
    k = np.flatnonzero(nu > 1e-14 * nu.max())
    nu_rate = _slope(k, nu[k])
    dec = A.decay
    B = A.block(np.arange(2, 62))
    i = np.arange(60)
    gap = []
    for J in range(60):
        g = np.linalg.norm(np.where(np.abs(i[:, None] - i[None, :]) <= J, 0.0, B), 2)
        gap.append(g)
    gap = np.array(gap)
    J = np.flatnonzero(gap > 1e-13 * gap[0])
    trunc_rate = _slope(J, gap[J])
    ok = dec.eta_L >= 0.9 * nu_rate and trunc_rate >= 0.9 * dec.eta_L
    return ok, (f"nu rate {nu_rate:.4f}, eta_L {dec.eta_L:.4f} (>= {0.9 * nu_rate:.4f}), "
                f"truncation rate {trunc_rate:.4f} (>= {0.9 * dec.eta_L:.4f})")


# --- 5, 6 ------------------------------------------------------------------

def _run(name: str, algorithm: str, theta: float):
    alpha = build_problem(name).alpha_star_lower
    cfg = parse_config({"problem": name,
                        "adaptive": {"theta": theta, "tol": FINAL_ERROR * alpha,
                                     "algorithm": algorithm, "max_iter": 200}})
    t0 = time.perf_counter()
    report = run_experiment(cfg, write=False)
    return report, time.perf_counter() - t0


def _verdicts(report) -> Dict[str, dict]:
    return {v["name"]: v for v in report.verdicts}


def criterion_5() -> Tuple[bool, str]:
    ok = True
    parts = []
    for name in ("P1", "P2", "P3"):
        for theta in ADLEG_THETAS:
            rep, secs = _run(name, "adleg", theta)
            v = _verdicts(rep)
            final = rep.rows[-1]["true_err_h1"] if rep.rows else 0.0
            good = (v["contraction"]["status"] == "pass" and final <= FINAL_ERROR and secs < 60)
            ok &= good
            worst = max(r["ratio_energy"] for r in rep.rows)
            parts.append(f"{name}/{theta}: {worst:.3f}<={rep.rows[0]['bound_rho']:.3f}")
    return ok, "max ratio vs rho " + "; ".join(parts)


def criterion_6() -> Tuple[bool, str]:
    ok = True
    parts = []
    for name in ("P1", "P2", "P3"):
        rep, secs = _run(name, "pc_adleg", PC_THETA[name])
        v = _verdicts(rep)
        rho = rep.rows[0]["bound_rho"]
        good = (v["contraction"]["status"] == "pass" and v["predictor_bound"]["status"] == "pass"
                and rho < 1 and (name != "P2" or rho <= 0.9))
        ok &= good
        worst = max(r["ratio_energy"] for r in rep.rows)
        parts.append(f"{name}/theta={PC_THETA[name]}: {worst:.3f}<={rho:.3f}, "
                     f"predictor {v['predictor_bound']['status']}")
    return ok, "; ".join(parts)


# --- 7 ---------------------------------------------------------------------

def criterion_7(trials: int = 1000) -> Tuple[bool, str]:
    rng = np.random.default_rng(SEED)
    mismatches = 0
    for _ in range(trials):
        s = int(rng.integers(1, 9))
        vals = rng.standard_normal(s) * np.exp(-rng.uniform(0, 3, s))
        if rng.random() < 0.2:  # exercise ties
            vals[rng.integers(0, s)] = vals[0]
        w = BSVector.from_dense(rng.choice(np.arange(2, 40), s, replace=False), vals)
        eps = float(rng.uniform(0.0, 0.6) * w.stored_norm())
        got = len(coarse(w, eps))
        masks = _subset_masks(s)
        sq = np.abs(np.fromiter(w.entries.values(), float)) ** 2
        dropped = (~masks).astype(float) @ sq
        best = int(masks[dropped <= (2 * eps) ** 2].sum(axis=1).min())
        mismatches += got != best
    rep, _ = _run("P1", "pc_adleg", PC_THETA["P1"])
    card = _verdicts(rep)["coarsening_cardinality"]
    t_fit = rep.fits["u_ref"]["t"]
    ok = mismatches == 0 and card["status"] == "pass" and t_fit == 1.0
    return ok, (f"{trials - mismatches}/{trials} COARSE sets minimal; P1 cardinality line "
                f"{card['status']} (t_fit={t_fit}, margin {card['margin']:.3f})")


# --- 8 ---------------------------------------------------------------------

def criterion_8(trials: int = 1000) -> Tuple[bool, str]:
    rng = np.random.default_rng(SEED + 1)
    mismatch = not_minimal = 0
    for _ in range(trials):
        s = int(rng.integers(1, 13))
        vals = rng.standard_normal(s)
        if rng.random() < 0.2:
            vals[rng.integers(0, s)] = vals[0]
        r = BSVector.from_dense(rng.choice(np.arange(2, 60), s, replace=False), vals, "dual")
        theta = float(rng.uniform(0.05, 0.99))
        lam = doerfler(r, theta)
        total = r.norm()[1] ** 2
        target = theta * theta * total
        sel = np.array([r.get(k) for k in lam])
        for j in range(sel.size):
            if np.sum(np.delete(sel, j) ** 2) >= target:
                not_minimal += 1
                break
        sq = np.fromiter(r.entries.values(), float) ** 2
        masks = _subset_masks(s)
        captured = masks.astype(float) @ sq
        best = int(masks[captured >= target].sum(axis=1).min())
        mismatch += best != len(lam)
    ok = mismatch == 0 and not_minimal == 0
    return ok, (f"{trials - mismatch}/{trials} match exhaustive search; "
                f"{not_minimal} sets survive removal of an index")


# --- 9 ---------------------------------------------------------------------

def criterion_9(trials: int = 200) -> Tuple[bool, str]:
    rng = np.random.default_rng(SEED + 2)
    e_bad = 0
    for _ in range(trials):
        s = int(rng.integers(1, 11))
        v = BSVector.from_dense(np.arange(2, 2 + s), rng.standard_normal(s))
        E = best_n_term_errors(v)[:, 0]
        sq = np.fromiter(v.entries.values(), float) ** 2
        masks = _subset_masks(s)
        dropped = (~masks).astype(float) @ sq
        card = masks.sum(axis=1)
        for N in range(s + 1):
            e_bad += abs(E[N] - math.sqrt(max(dropped[card == N].min(), 0.0))) > 1e-12
    neps_bad = 0
    for eta in (0.5, 1.0, 2.0):
        n = np.arange(1, 60)
        v = np.exp(-eta * n)
        cn = class_norm_AG(v, eta, 1.0).value
        params = SparsityParams(eta, 1.0, cn)
        E = best_n_term_errors(v)[:, 1]
        for eps in np.geomspace(cn, 1e-12, 40):
            true_N = int(np.flatnonzero(E <= eps)[0])
            neps_bad += true_N > n_epsilon(float(eps), params)
    fit_parts = []
    fit_ok = True
    for eta in (0.5, 1.0, 2.0):
        for t in (0.5, 1.0):
            n = np.arange(1, 2000)
            p = fit_decay(np.exp(-eta * n ** t))
            good = abs(p.eta - eta) <= 0.1 * eta and abs(p.t - t) <= 0.05
            fit_ok &= good
            fit_parts.append(f"({eta},{t})->({p.eta:.3f},{p.t:.2f})")
    ok = e_bad == 0 and neps_bad == 0 and fit_ok
    return ok, (f"E_N mismatches {e_bad}, n_epsilon violations {neps_bad}, fits "
                + " ".join(fit_parts))


# --- 10 --------------------------------------------------------------------

def criterion_10() -> Tuple[bool, str]:
    pred = predict_residual_class(SparsityParams(1.0, 1.0))
    oracle = 0.5 ** (1 / 3) * (2 / 3) ** 0.25 * 0.75 ** (1 / 3) * 1.0
    exact_t = pred.t == 0.25
    eta_ok = abs(pred.eta - oracle) <= 1e-6
    rep, _ = _run("P3", "pc_adleg", PC_THETA["P3"])
    rc = _verdicts(rep)["residual_class"]
    ok = exact_t and eta_ok and rc["status"] == "pass"
    return ok, (f"t_bar={pred.t}, eta_bar/eta={pred.eta:.8f} vs {oracle:.8f}; "
                f"P3 residual classes {rc['status']} ({rc['detail']})")


CRITERIA: Dict[int, Tuple[str, Callable[[], Tuple[bool, str]], Optional[float]]] = {
    1: ("basis identities", criterion_1, 5.0),
    2: ("product formula", criterion_2, 30.0),
    3: ("assembly vs quadrature", criterion_3, 60.0),
    4: ("decay class", criterion_4, None),
    5: ("ADLEG contraction", criterion_5, None),
    6: ("PC-ADLEG contraction", criterion_6, None),
    7: ("coarsening optimality", criterion_7, None),
    8: ("Doerfler minimality", criterion_8, None),
    9: ("sparsity toolkit", criterion_9, None),
    10: ("class propagation", criterion_10, None),
}


def run_criterion(k: int) -> CriterionResult:
    title, fn, limit = CRITERIA[k]
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed criterion, not a crashed suite
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    secs = time.perf_counter() - t0
    if limit is not None and secs >= limit:
        ok = False
        detail += f"; runtime {secs:.1f} s exceeds {limit:.0f} s"
    return CriterionResult(k, title, bool(ok), detail, secs)


def run_all(only=None) -> List[CriterionResult]:
    keys = sorted(CRITERIA) if only is None else sorted(only)
    return [run_criterion(k) for k in keys]
