"""Command-line front end: ``adleg run | catalog | check``."""

from __future__ import annotations

import argparse
import sys
from typing import List, Optional

from .experiment import ConfigError, emit_report, load_config, run_experiment
from .problems import CATALOG


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(config)
    except Exception as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.csv:
        emit_report(report, "csv", args.csv)
    if args.json:
        emit_report(report, "structured", args.json)
    t = report.totals
    print(f"{config.name}: {t['iterations']} iterations, |Lambda| = {t['final_card']}, "
          f"||r|| <= {t['final_residual_hi']:.3e}, error {t['final_err_h1']:.3e}")
    for v in report.verdicts:
        margin = "" if v["margin"] is None else f" (margin {v['margin']:.3g})"
        print(f"  {v['status']:>14}  {v['name']}{margin}")
    return 0 if report.passed else 1


def _cmd_catalog(args) -> int:
    for entry in CATALOG.values():
        print(f"{entry.name}  [{entry.kind}]  {entry.description}")
    return 0


def _cmd_check(args) -> int:
    from .acceptance import run_all

    only = [int(k) for k in args.only.split(",")] if args.only else None
    results = run_all(only)
    for r in results:
        print(r.line(), flush=True)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 0 if not failed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adleg", description="Adaptive Legendre-Galerkin solvers")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--csv", help="write the per-iteration CSV here")
    r.add_argument("--json", help="write the structured report here")
    r.set_defaults(func=_cmd_run)
    c = sub.add_parser("catalog", help="list built-in problems")
    c.set_defaults(func=_cmd_catalog)
    k = sub.add_parser("check", help="run the acceptance suite")
    k.add_argument("--only", help="comma-separated criterion numbers")
    k.set_defaults(func=_cmd_check)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
