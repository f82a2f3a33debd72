"""Command-line front end.

Subcommands: frame-check, propagate, ivp, dirichlet, convergence.  Every
command is deterministic given a config and seed.  Exit codes: 0 success,
2 configuration error, 3 numerical failure, 4 acceptance-threshold failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, default_config_text
from .cutoff import ConeConditionError
from .fdwave import CflError, CompatibilityError, InstabilityError
from .frame import ConditioningError, ResolutionError
from .scenarios import (
    NumericalFailure,
    fit_rate,
    run_convergence,
    run_dirichlet_scale,
    run_frame_check,
    run_ivp_scale,
    run_propagate,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_THRESHOLD = 4

_NUMERICAL_ERRORS = (
    NumericalFailure,
    ConditioningError,
    InstabilityError,
    ConeConditionError,
)
_CONFIG_ERRORS = (ConfigError, CflError, ResolutionError, CompatibilityError, FileNotFoundError)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="beamframe",
        description="Gaussian beam parametrices for the 2D wave equation",
    )
    ap.add_argument("--print-config", action="store_true", help="print the default config and exit")
    sub = ap.add_subparsers(dest="command")
    for name, doc in (
        ("frame-check", "frequency-cover overlap bounds and lattice criterion"),
        ("propagate", "integrate the focusing beam front and report the caustic time"),
        ("ivp", "whole-space parametrix vs interior solver error tables"),
        ("dirichlet", "half-space parametrix vs boundary solver error tables"),
        ("convergence", "multi-scale error slopes for ivp and dirichlet"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", type=Path, default=None, help="config file path")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--scales", type=str, default=None, help="comma list, e.g. 2,3,4")
        p.add_argument("--json", action="store_true", help="print a JSON report")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        if name == "propagate":
            p.add_argument("--beams", type=int, default=50)
            p.add_argument("--cone-deg", type=float, default=40.0)
            p.add_argument("--T", type=float, default=8.4)
            p.add_argument("--snapshots", type=str, default="")
        if name == "convergence":
            p.add_argument(
                "--kind", choices=("ivp", "dirichlet", "both"), default="both"
            )
    return ap


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    if args.scales:
        cfg.scales = [int(s) for s in args.scales.split(",")]
        cfg.j_max = max(cfg.j_max, max(cfg.scales))
        ScenarioConfig.__post_init__(cfg)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _emit(args, report: dict) -> None:
    if args.json:
        print(json.dumps(report, default=str, indent=1))
    else:
        for k, v in report.items():
            if k in ("rows", "per_slice"):
                continue
            print(f"{k} = {v}")


def main(argv=None) -> int:
    ap = _build_parser()
    args = ap.parse_args(argv)
    if args.print_config:
        print(default_config_text())
        return EXIT_OK
    if not args.command:
        ap.print_help()
        return EXIT_CONFIG
    try:
        cfg = _load_config(args)
        out = args.out
        if args.command == "frame-check":
            report = run_frame_check(cfg, out)
            _emit(args, report)
            return EXIT_OK if report["criterion"] else EXIT_THRESHOLD
        if args.command == "propagate":
            snaps = [float(s) for s in args.snapshots.split(",")] if args.snapshots else []
            report = run_propagate(
                cfg, out, n_beams=args.beams, cone_deg=args.cone_deg, T=args.T,
                snapshot_times=snaps,
            )
            _emit(args, report)
            return EXIT_OK
        if args.command in ("ivp", "dirichlet"):
            report = run_convergence(cfg, args.command, out)
            _emit(args, {"fit": report["fit"], "fd_gate": report["fd_gate"],
                         **{f"err_j{r['j']}": r["normalized_error"] for r in report["rows"]}})
            return EXIT_OK
        if args.command == "convergence":
            kinds = ("ivp", "dirichlet") if args.kind == "both" else (args.kind,)
            reports = {}
            ok = True
            for kind in kinds:
                rep = run_convergence(cfg, kind, out)
                reports[kind] = {"fit": rep["fit"], "fd_gate": rep["fd_gate"]}
                ok = ok and rep["fit"]["slope"] <= -0.35 and rep["fd_gate"]
            _emit(args, reports)
            return EXIT_OK if ok else EXIT_THRESHOLD
        ap.error(f"unknown command {args.command}")
    except _CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
