"""Experiment configuration, run harness, theorem checks and reports.

Configs are JSON files. Problems are either a catalog name or an inline
object with ``nu``, ``sigma`` and exactly one of ``u`` (manufactured exact
solution) or ``f`` (right-hand side). Coefficients may be a number, a list
of classical Legendre coefficients, or an expression in ``x``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .adaptive import AdaptiveConfig, IterationRecord, MaxIterExceeded, run
from .basis import BSVector
from .galerkin import energy_norm, problem_rhs, reference_solution
from .operator import ProblemSpec, StiffnessOperator
from .problems import CATALOG, manufactured_coefficients
from .sparsity import (ClassPropagationUnavailable, NoExponentialTrend, SparsityParams, conforms,
                       fit_decay, predict_residual_class)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunReport",
    "load_config",
    "parse_config",
    "build_problem_from_config",
    "run_experiment",
    "run_batch",
    "emit_report",
    "report_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ["n", "card_lambda", "card_lambda_hat", "r_lo", "r_hi", "err_h1_lo", "err_h1_hi",
               "err_energy_lo", "err_energy_hi", "ratio_energy", "bound_rho", "verdict"]
RATIO_SLACK = 1e-8
CARD_SLACK = 1.1


class ConfigError(ValueError):
    pass


# --- configuration -------------------------------------------------------------

def _number(value, where: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"{where}: expected a number or decimal string, got {value!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description.

    ``problem`` is a catalog name or an inline dict; ``adaptive`` holds the
    algorithm settings. ``raw`` keeps the parsed JSON for the report echo.
    """

    name: str
    problem: Union[str, Dict[str, Any]]
    adaptive: AdaptiveConfig
    csv_path: Optional[str] = None
    json_path: Optional[str] = None
    seed: int = 0
    K_ref: Optional[int] = None
    use_exact_band: bool = True
    probe_size: int = 40
    raw: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)


_TOP_KEYS = {"name", "problem", "adaptive", "output", "seed", "K_ref", "use_exact_band",
             "probe_size"}
_ADAPTIVE_KEYS = {"theta", "tol", "max_iter", "algorithm", "coarsening_multiplier"}


def parse_config(data: Dict[str, Any], base_dir: str = ".") -> ExperimentConfig:
    """Validate a parsed config dict (see module docstring for the layout)."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level field(s): {sorted(unknown)}")
    if "problem" not in data:
        raise ConfigError("missing field 'problem'")
    problem = data["problem"]
    if isinstance(problem, str):
        if problem not in CATALOG:
            raise ConfigError(f"problem: unknown catalog name {problem!r}")
    elif isinstance(problem, dict):
        bad = set(problem) - {"nu", "sigma", "u", "f", "name"}
        if bad:
            raise ConfigError(f"problem: unknown field(s) {sorted(bad)}")
        if ("u" in problem) == ("f" in problem):
            raise ConfigError("problem: exactly one of 'u' (manufactured solution) and 'f' must be given")
        if "nu" not in problem:
            raise ConfigError("problem: missing field 'nu'")
        # build eagerly so that invariants (nu > 0, sigma >= 0, u(+-1) = 0) are checked now
        build_problem_from_config(problem)
    else:
        raise ConfigError("problem: expected a catalog name or an object")

    ad = data.get("adaptive")
    if not isinstance(ad, dict):
        raise ConfigError("missing object 'adaptive'")
    unknown = set(ad) - _ADAPTIVE_KEYS
    if unknown:
        raise ConfigError(f"adaptive: unknown field(s) {sorted(unknown)}")
    for key in ("theta", "tol"):
        if key not in ad:
            raise ConfigError(f"adaptive: missing field {key!r}")
    try:
        adaptive = AdaptiveConfig(
            theta=_number(ad["theta"], "adaptive.theta"),
            tol=_number(ad["tol"], "adaptive.tol"),
            max_iter=int(_number(ad.get("max_iter", 100), "adaptive.max_iter")),
            algorithm=str(ad.get("algorithm", "adleg")),
            coarsening_multiplier=_number(ad.get("coarsening_multiplier", 2), "adaptive.coarsening_multiplier"),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"adaptive: {exc}") from None

    out = data.get("output", {}) or {}
    if not isinstance(out, dict) or set(out) - {"csv", "json"}:
        raise ConfigError("output: expected an object with optional 'csv' and 'json' paths")

    def path(p):
        return None if p is None else os.path.join(base_dir, p)

    K_ref = data.get("K_ref")
    if K_ref is not None:
        K_ref = int(_number(K_ref, "K_ref"))
        if K_ref < 2:
            raise ConfigError("K_ref must be >= 2")
    probe = int(_number(data.get("probe_size", 40), "probe_size"))
    if probe < 20:
        raise ConfigError("probe_size must be >= 20")
    name = data.get("name") or (problem if isinstance(problem, str) else problem.get("name", "inline"))
    return ExperimentConfig(
        name=str(name), problem=problem, adaptive=adaptive,
        csv_path=path(out.get("csv")), json_path=path(out.get("json")),
        seed=int(_number(data.get("seed", 0), "seed")), K_ref=K_ref,
        use_exact_band=bool(data.get("use_exact_band", True)), probe_size=probe, raw=data)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; errors name the line or the field."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return parse_config(data, os.path.dirname(os.path.abspath(path)))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# --- inline problems -----------------------------------------------------------

def _sympy_expr(text: str, where: str):
    import sympy as sp
    from sympy.parsing.sympy_parser import parse_expr, standard_transformations

    x = sp.Symbol("x", real=True)
    names = {"x": x, "pi": sp.pi, "e": sp.E, "E": sp.E}
    for fn in ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh", "tanh", "atan", "Abs"):
        names[fn] = getattr(sp, fn)
    try:
        expr = parse_expr(text, local_dict=names, global_dict={"__builtins__": {}, **_sympy_globals()},
                          transformations=standard_transformations)
    except Exception as exc:
        raise ConfigError(f"{where}: cannot parse {text!r}: {exc}") from None
    extra = expr.free_symbols - {x}
    if extra:
        raise ConfigError(f"{where}: unknown symbol(s) {sorted(map(str, extra))}; only x is allowed")
    return expr, x


def _sympy_globals():
    import sympy as sp
    return {"Integer": sp.Integer, "Float": sp.Float, "Rational": sp.Rational, "Symbol": sp.Symbol}


def _vectorized(expr, x) -> Callable:
    import sympy as sp
    fn = sp.lambdify(x, expr, "numpy")

    def f(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(fn(t), dtype=float) * np.ones_like(t)
    return f


def _coefficient(value, where: str):
    """Number, classical coefficient list, or expression string."""
    if isinstance(value, list):
        return [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]
    if isinstance(value, str):
        try:
            return [float(value)]
        except ValueError:
            pass
        import sympy as sp
        expr, x = _sympy_expr(value, where)
        if expr.is_polynomial(x):
            mono = [float(c) for c in reversed(sp.Poly(expr, x).all_coeffs())]
            return np.polynomial.legendre.poly2leg(mono).tolist()
        return _vectorized(expr, x)
    return [_number(value, where)]


def build_problem_from_config(problem: Union[str, Dict[str, Any]]) -> ProblemSpec:
    if isinstance(problem, str):
        return CATALOG[problem].build()
    nu = _coefficient(problem["nu"], "problem.nu")
    sigma = _coefficient(problem.get("sigma", 0), "problem.sigma")
    name = str(problem.get("name", "inline"))
    try:
        if "u" in problem:
            expr, x = _sympy_expr(str(problem["u"]), "problem.u")
            import sympy as sp
            exact = manufactured_coefficients(_vectorized(sp.diff(expr, x), x), u=_vectorized(expr, x))
            return ProblemSpec(nu, sigma, exact=exact, name=name)
        expr, x = _sympy_expr(str(problem["f"]), "problem.f")
        return ProblemSpec(nu, sigma, rhs=_vectorized(expr, x), name=name)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from None


# --- report --------------------------------------------------------------------

@dataclass
class RunReport:
    """Serializable outcome of one experiment.

    ``verdicts`` entries have keys name, status (pass / fail /
    not-applicable), margin and detail. ``truncated`` marks a partial report
    written after a failure.
    """

    config: Dict[str, Any]
    rows: List[Dict[str, Any]]
    fits: Dict[str, Any]
    verdicts: List[Dict[str, Any]]
    operator: Dict[str, Any]
    totals: Dict[str, Any]
    truncated: bool = False
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return not self.truncated and all(v["status"] != "fail" for v in self.verdicts)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunReport":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


def _verdict(name: str, ok: Optional[bool], margin: Optional[float], detail: str = "") -> Dict[str, Any]:
    status = "not-applicable" if ok is None else ("pass" if ok else "fail")
    return {"name": name, "status": status, "margin": margin, "detail": detail}


def _params_dict(p: Optional[SparsityParams]):
    return None if p is None else asdict(p)


def _finite(x):
    """JSON-safe float: infinities become strings."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _diff_norm(a: BSVector, b: BSVector) -> float:
    return (a - b).stored_norm()


# --- harness -------------------------------------------------------------------

def _config_echo(config: ExperimentConfig) -> Dict[str, Any]:
    return {"name": config.name, "problem": config.problem, "adaptive": asdict(config.adaptive),
            "seed": config.seed, "K_ref": config.K_ref, "use_exact_band": config.use_exact_band,
            "probe_size": config.probe_size}


def _residual_floor(f: BSVector) -> float:
    return max(1e-14, 1e-13 * f.norm()[1])


def _evaluate(config, problem, A, f, u_ref, records):
    a_lo, a_hi = problem.alpha_star_lower, problem.alpha_star_upper
    cfg = config.adaptive
    pc = cfg.algorithm == "pc_adleg"
    rho = cfg.rho(a_lo, a_hi)
    zero = BSVector({}, "primal")
    e_prev = energy_norm(A, u_ref)
    rows, verdicts = [], []
    ratios, equiv_margin, pred_margin, coarse_margin = [], [], [], []
    energies = [e_prev]
    for rec in records:
        d = u_ref - rec.u
        e = energy_norm(A, d)
        h = d.stored_norm()
        ratio = e / e_prev if e_prev > 0 else 0.0
        ratios.append(ratio)
        energies.append(e)
        lo, hi = rec.error_h1
        equiv_margin.append(min(h - lo * (1 - 1e-8) + 1e-14, hi * (1 + 1e-8) + 1e-14 - h))
        row = {
            "n": rec.n + 1,
            "card_lambda": len(rec.lambda_after),
            "card_lambda_hat": len(rec.lambda_hat) if pc else None,
            "r_lo": rec.residual_norm[0], "r_hi": rec.residual_norm[1],
            "err_h1_lo": lo, "err_h1_hi": hi,
            "err_energy_lo": rec.error_energy[0], "err_energy_hi": rec.error_energy[1],
            "true_err_h1": h, "true_err_energy": e,
            "ratio_energy": ratio, "bound_rho": rho,
            "verdict": "pass" if ratio <= rho + RATIO_SLACK else "fail",
            "marked": rec.marked_cardinality, "J_theta": rec.J_theta_used,
            "K_max": rec.K_max, "wall_time": rec.wall_time,
            "lambda": list(rec.lambda_after.indices),
        }
        if pc:
            pred_err = _diff_norm(u_ref, rec.u_hat)
            pred_bound = 2.0 / a_lo * math.sqrt(1 - cfg.theta ** 2) * rec.residual_before[1]
            pred_margin.append(pred_bound - pred_err)
            coarse_margin.append(3.0 * math.sqrt(a_hi) * rec.epsilon - e)
            row.update({"epsilon": rec.epsilon, "predictor_err_h1": pred_err,
                        "predictor_bound": pred_bound})
        rows.append(row)
        e_prev = e

    if records:
        worst = max(ratios)
        verdicts.append(_verdict("contraction", worst <= rho + RATIO_SLACK, rho - worst,
                                 f"max ratio {worst:.6g} vs rho {rho:.6g}"))
        mono = all(b <= a * (1 + 1e-12) for a, b in zip(energies, energies[1:]))
        verdicts.append(_verdict("monotone_error", mono, None, "energy errors non-increasing"))
        verdicts.append(_verdict("residual_error_equivalence", min(equiv_margin) >= 0,
                                 min(equiv_margin), "true H1 error inside certified interval"))
        final = records[-1].residual_norm[1]
        verdicts.append(_verdict("termination", final <= cfg.tol, cfg.tol - final,
                                 f"final ||r||_hi {final:.3e} vs tol {cfg.tol:.3e}"))
    else:
        fn = f.norm()[1]
        verdicts.append(_verdict("termination", fn <= cfg.tol, cfg.tol - fn, "no iterations"))

    fits: Dict[str, Any] = {"u_ref": None, "residuals": []}
    try:
        u_fit = fit_decay(u_ref)
    except NoExponentialTrend as exc:
        u_fit = None
        fits["u_ref_error"] = str(exc)
    fits["u_ref"] = _params_dict(u_fit)

    if pc and records:
        verdicts.append(_verdict("predictor_bound", min(pred_margin) >= 0, min(pred_margin),
                                 "||u_ref - u_hat|| <= (2/alpha_*) sqrt(1-theta^2) ||r_n||"))
        verdicts.append(_verdict("coarsening_error", min(coarse_margin) >= 0, min(coarse_margin),
                                 "|||u_ref - u_{n+1}||| <= 3 sqrt(alpha^*) eps_n"))
        verdicts.append(_cardinality_verdict(rows, u_fit, a_lo, a_hi))
        verdicts.append(_residual_class_verdict(A, f, u_fit, records, fits))
    return rows, verdicts, fits


def _cardinality_verdict(rows, u_fit, a_lo, a_hi):
    if u_fit is None:
        return _verdict("coarsening_cardinality", None, None, "no decay fit for u_ref")
    C = 3.0 * math.sqrt(a_hi / a_lo)
    worst = math.inf
    for row in rows:
        err = row["true_err_h1"]
        if err <= 0:
            continue
        arg = max(math.log(C * u_fit.class_norm / err), 0.0)
        bound = CARD_SLACK * (arg / u_fit.eta) ** (1.0 / u_fit.t) + 1.0
        worst = min(worst, bound - row["card_lambda"])
    if not math.isfinite(worst):
        return _verdict("coarsening_cardinality", None, None, "no positive errors")
    return _verdict("coarsening_cardinality", worst >= 0, worst,
                    f"|Lambda| <= 1.1 phi^-1(err / (C ||u||)) + 1 with eta={u_fit.eta:.4g}, t={u_fit.t:.3g}")


def _residual_class_verdict(A, f, u_fit, records, fits):
    name = "residual_class"
    if u_fit is None:
        return _verdict(name, None, None, "no decay fit for u_ref")
    dec = A.decay
    dense = A.problem.nu.approximate or A.problem.sigma.approximate or A.exact_band is None
    try:
        if dense:
            eta_bar = dec.eta_L_bar if dec.eta_L_bar is not None else dec.eta_L_bar_fitted
            if eta_bar is None:
                raise ClassPropagationUnavailable("inverse decay rate unavailable")
            # a class with a smaller rate contains the original one
            base = SparsityParams(min(u_fit.eta, 0.99 * eta_bar), u_fit.t, u_fit.class_norm)
            pred = predict_residual_class(base)
        else:
            pred = predict_residual_class(u_fit, band=A.exact_band)
    except ClassPropagationUnavailable as exc:
        return _verdict(name, None, None, str(exc))
    fits["residual_prediction"] = _params_dict(pred)
    floor = _residual_floor(f)
    statuses, margins = [], []
    for rec in records:
        try:
            rf = fit_decay(rec.residual, floor=floor)
        except NoExponentialTrend as exc:
            fits["residuals"].append({"n": rec.n + 1, "fit": None, "reason": str(exc)})
            continue
        ok, detail = conforms(rf, pred)
        fits["residuals"].append({"n": rec.n + 1, "fit": _params_dict(rf), "conforms": ok,
                                  "detail": detail})
        statuses.append(ok)
        margins.append(rf.t - pred.t)
    if not statuses:
        return _verdict(name, None, None, "no residual admitted a decay fit")
    return _verdict(name, all(statuses), min(margins),
                    f"{sum(statuses)}/{len(statuses)} fitted residuals conform"
                    + (" (banded extrapolation)" if pred.extrapolated else ""))


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunReport:
    """Build the problem, run the configured algorithm and evaluate all checks.

    On failure a partial report marked ``truncated`` is written (when paths
    are configured) before the exception propagates.
    """
    t0 = time.perf_counter()
    problem = build_problem_from_config(config.problem)
    A = StiffnessOperator(problem, probe_size=config.probe_size,
                          use_exact_band=config.use_exact_band)
    operator_info: Dict[str, Any] = {
        "alpha_lower": problem.alpha_star_lower, "alpha_upper": problem.alpha_star_upper,
        "alpha_upper_max_nu_sigma": problem.alpha_upper_max_nu_sigma,
        "band": A.band, "use_exact_band": A.use_exact_band,
    }
    f = problem_rhs(A)
    u_ref = reference_solution(A, f, K_start=config.K_ref).u
    records: List[IterationRecord] = []
    error = None
    try:
        dec = A.decay
        operator_info.update({k: _finite(v) if isinstance(v, float) else v
                              for k, v in asdict(dec).items()})
        records = run(problem, config.adaptive, A, f)
    except MaxIterExceeded as exc:
        records = exc.records
        error = exc
    except Exception as exc:  # flushed as a truncated report below
        error = exc
    rows, verdicts, fits = _evaluate(config, problem, A, f, u_ref, records)
    totals = {
        "iterations": len(records),
        "final_card": len(records[-1].lambda_after) if records else 0,
        "final_residual_hi": records[-1].residual_norm[1] if records else f.norm()[1],
        "final_err_h1": rows[-1]["true_err_h1"] if rows else u_ref.stored_norm(),
        "u_ref_dofs": len(u_ref),
        "cache_entries": A.cache_size(),
        "wall_time": time.perf_counter() - t0,
    }
    report = RunReport(_config_echo(config), rows, fits, verdicts, operator_info, totals,
                       truncated=error is not None,
                       error=None if error is None else f"{type(error).__name__}: {error}")
    if write:
        if config.csv_path:
            emit_report(report, "csv", config.csv_path)
        if config.json_path:
            emit_report(report, "structured", config.json_path)
    if error is not None:
        raise error
    return report


def run_batch(configs: Sequence[ExperimentConfig], workers: int = 4) -> List[RunReport]:
    """Run independent experiments concurrently, each on its own operator."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_experiment, configs))


# --- output --------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.rows:
        w.writerow([_fmt(row.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_report(report: RunReport, format: str, path) -> str:
    """Write the report as ``"csv"`` or ``"structured"`` (JSON, sorted keys)."""
    if format == "csv":
        text = report_csv(report)
    elif format == "structured":
        text = report.to_json() + "\n"
    else:
        raise ValueError(f"unknown format {format!r}")
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report: {exc.strerror}", str(path)) from None
    return str(path)
