import json
import math

import pytest

from adleg.adaptive import ThetaTooSmall
from adleg.cli import main
from adleg.experiment import (CSV_COLUMNS, ConfigError, RunReport, emit_report, load_config,
                              parse_config, run_batch, run_experiment)

MINIMAL = {"problem": {"nu": 1, "sigma": 0, "u": "sin(pi*x)"},
           "adaptive": {"theta": "0.5", "tol": "1e-8"}}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data, indent=2))
    return p


class TestConfig:
    def test_minimal_valid(self, tmp_path):
        cfg = load_config(write(tmp_path, MINIMAL))
        assert cfg.adaptive.theta == 0.5 and cfg.adaptive.tol == 1e-8
        assert cfg.adaptive.algorithm == "adleg"

    def test_both_u_and_f_rejected(self):
        bad = json.loads(json.dumps(MINIMAL))
        bad["problem"]["f"] = "1"
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(bad)

    def test_parse_error_has_line(self, tmp_path):
        p = write(tmp_path, '{\n  "problem": "P1",\n  "adaptive": {"theta": 0.5,, "tol": 1}\n}')
        with pytest.raises(ConfigError, match=r"cfg\.json:3:"):
            load_config(p)

    @pytest.mark.parametrize("patch, msg", [
        ({"problem": "P9"}, "unknown catalog name"),
        ({"bogus": 1}, "unknown top-level"),
        ({"adaptive": {"theta": 1.5, "tol": 1e-8}}, "theta"),
        ({"adaptive": {"theta": 0.5}}, "tol"),
        ({"problem": {"nu": "x", "u": "sin(pi*x)"}}, "problem"),
        ({"problem": {"nu": 1, "u": "cos(x)"}}, "vanish"),
        ({"problem": {"nu": 1, "u": "sin(pi*y)"}}, "unknown symbol"),
        ({"adaptive": {"theta": True, "tol": 1e-8}}, "boolean"),
    ])
    def test_validation(self, patch, msg):
        data = dict(MINIMAL, **patch)
        with pytest.raises(ConfigError, match=msg):
            parse_config(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_pc_theta_rejected_at_run_start(self):
        cfg = parse_config({"problem": "P1", "adaptive": {"theta": 0.3, "tol": 1e-8,
                                                          "algorithm": "pc_adleg"}})
        assert 6 * math.sqrt(0.91) > 1
        with pytest.raises(ThetaTooSmall):
            run_experiment(cfg, write=False)


class TestRun:
    def test_identity_terminates(self):
        rep = run_experiment(parse_config(MINIMAL), write=False)
        assert rep.passed and not rep.truncated
        assert rep.totals["final_residual_hi"] <= 1e-8

    def test_analytic_problem_error_decreases(self):
        rep = run_experiment(parse_config({"problem": "P3", "adaptive": {"theta": 0.5, "tol": 1e-9}}),
                             write=False)
        errs = [r["err_energy_hi"] for r in rep.rows]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert all(r["ratio_energy"] <= r["bound_rho"] for r in rep.rows)
        assert {v["status"] for v in rep.verdicts} <= {"pass", "not-applicable"}

    def test_inline_rhs_and_polynomial_coefficients(self):
        rep = run_experiment(parse_config({
            "problem": {"nu": "2 + x", "sigma": "1 + x/2", "f": "exp(x)"},
            "adaptive": {"theta": 0.9995, "tol": 1e-8, "algorithm": "pc_adleg"}}), write=False)
        assert rep.operator["band"] == 3
        assert rep.totals["final_residual_hi"] <= 1e-8

    def test_csv_determinism(self, tmp_path):
        data = dict(MINIMAL, problem="P2", seed=3, output={"csv": "a.csv"})
        p = write(tmp_path, data)
        run_experiment(load_config(p))
        first = (tmp_path / "a.csv").read_bytes()
        run_experiment(load_config(p))
        assert (tmp_path / "a.csv").read_bytes() == first
        header = first.decode().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)

    def test_empty_run_header_only(self, tmp_path):
        cfg = parse_config({"problem": "P1", "adaptive": {"theta": 0.5, "tol": 1e6}})
        rep = run_experiment(cfg, write=False)
        assert rep.rows == []
        path = emit_report(rep, "csv", tmp_path / "e.csv")
        assert open(path).read() == ",".join(CSV_COLUMNS) + "\n"

    def test_structured_round_trip(self, tmp_path):
        rep = run_experiment(parse_config({"problem": "P3", "adaptive": {
            "theta": 0.999, "tol": 1e-9, "algorithm": "pc_adleg"}}), write=False)
        path = emit_report(rep, "structured", tmp_path / "r.json")
        again = RunReport.from_json(open(path).read())
        assert again == rep
        assert again.to_json() == rep.to_json()

    def test_truncated_report_flushed(self, tmp_path):
        data = {"problem": "P3", "adaptive": {"theta": 0.3, "tol": 1e-12, "max_iter": 2},
                "output": {"json": "t.json"}}
        with pytest.raises(Exception):
            run_experiment(load_config(write(tmp_path, data)))
        rep = RunReport.from_json((tmp_path / "t.json").read_text())
        assert rep.truncated and "MaxIterExceeded" in rep.error and len(rep.rows) == 2

    def test_batch(self):
        cfgs = [parse_config({"problem": n, "adaptive": {"theta": 0.5, "tol": 1e-8}})
                for n in ("P1", "P2", "P3")]
        reports = run_batch(cfgs)
        assert [r.config["name"] for r in reports] == ["P1", "P2", "P3"]
        assert all(r.passed for r in reports)

    def test_unknown_format(self, tmp_path):
        rep = run_experiment(parse_config(MINIMAL), write=False)
        with pytest.raises(ValueError):
            emit_report(rep, "xml", tmp_path / "x")


class TestCli:
    def test_exit_codes(self, tmp_path, capsys):
        good = write(tmp_path, MINIMAL, "good.json")
        assert main(["run", str(good), "--csv", str(tmp_path / "o.csv")]) == 0
        assert (tmp_path / "o.csv").exists()
        bad = write(tmp_path, "{", "bad.json")
        assert main(["run", str(bad)]) == 2
        failing = write(tmp_path, {"problem": "P1", "adaptive": {
            "theta": 0.3, "tol": 1e-8, "algorithm": "pc_adleg"}}, "fail.json")
        assert main(["run", str(failing)]) == 1

    def test_catalog(self, capsys):
        assert main(["catalog"]) == 0
        out = capsys.readouterr().out
        assert all(n in out for n in ("P1", "P2", "P3"))

    def test_check_subset(self, capsys):
        assert main(["check", "--only", "1,10"]) == 0
        assert "2/2 criteria passed" in capsys.readouterr().out


@pytest.mark.parametrize("algorithm, theta", [("adleg", 0.5), ("pc_adleg", 0.999)])
def test_decay_bound_path(algorithm, theta):
    cfg = parse_config({"problem": "P3", "use_exact_band": False,
                        "adaptive": {"theta": theta, "tol": 1e-9, "algorithm": algorithm}})
    rep = run_experiment(cfg, write=False)
    assert rep.operator["exact_band"] is None
    assert rep.passed
