"""Command-line front end.

Subcommands: solve, simulate, catalog list, check. Flags override config
keys. Exit codes: 0 success, 1 invalid config, 2 solver/MC nonconvergence,
3 invariant violation in self-check mode.
"""
from __future__ import annotations

import argparse
import json
import sys

from .catalog import catalog_names
from .config import ProblemConfig, load_config
from .errors import ConfigError, ConvergenceFailureError, DynkinError
from .pipeline import run_simulate, run_solve, self_check


def _add_common(p):
    p.add_argument("config", help="problem configuration file")
    p.add_argument("--grid-points", type=int, help="override grid.n_points")
    p.add_argument("--x-min", type=float, help="override grid.x_min")
    p.add_argument("--x-max", type=float, help="override grid.x_max")
    p.add_argument("--seed", type=int, help="override mc.seed")
    p.add_argument("--paths", type=int, help="override mc.n_paths")
    p.add_argument("--output", help="override output.dir")
    p.add_argument("--format", choices=["csv", "json"],
                   help="restrict emission to one format")


def _apply_overrides(cfg: ProblemConfig, args):
    if args.grid_points is not None:
        cfg.grid["n_points"] = args.grid_points
    if args.x_min is not None:
        cfg.grid["x_min"] = args.x_min
    if args.x_max is not None:
        cfg.grid["x_max"] = args.x_max
    if args.seed is not None:
        cfg.mc["seed"] = args.seed
    if args.paths is not None:
        cfg.mc["n_paths"] = args.paths
    if args.output is not None:
        cfg.output["dir"] = args.output
    if args.format == "csv":
        cfg.output.setdefault("csv", "solution.csv")
        cfg.output["json"] = ""
    elif args.format == "json":
        cfg.output.setdefault("json", "report.json")
        cfg.output["csv"] = ""


def _load(args) -> ProblemConfig:
    cfg = load_config(args.config)
    _apply_overrides(cfg, args)
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="dynkin",
        description="Value functions and stopping diagnostics of perpetual "
                    "two-player stopping games on one-dimensional diffusions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a game and emit curve/report files")
    _add_common(p_solve)
    p_solve.add_argument("--check", action="store_true",
                         help="run the invariant self-check after solving")

    p_sim = sub.add_parser("simulate", help="solve, then run the Monte Carlo stage")
    _add_common(p_sim)

    p_cat = sub.add_parser("catalog", help="catalog utilities")
    p_cat.add_argument("action", choices=["list"])

    p_check = sub.add_parser("check", help="solve and run the invariant suite")
    _add_common(p_check)

    args = parser.parse_args(argv)

    if args.command == "catalog":
        for name in catalog_names():
            print(name)
        return 0

    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        solution = run_solve(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceFailureError as exc:
        print(f"solver failed to converge: {exc}", file=sys.stderr)
        return 2
    except DynkinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "simulate" or (cfg.resolved()["mc"]["enabled"]
                                      and args.command == "solve"):
        if args.command == "simulate":
            cfg.mc["enabled"] = True
        try:
            solution = run_simulate(cfg, solution)
            from .pipeline import emit_outputs
            emit_outputs(solution, cfg.resolved()["output"])
        except DynkinError as exc:
            print(f"mc error: {exc}", file=sys.stderr)
            return 2

    if solution.truncation_warning:
        print("truncation-warning: bracket gap or boundary trend suggests the "
              "domain is too small for the contact set", file=sys.stderr)

    if args.command == "check" or getattr(args, "check", False):
        violations = self_check(solution)
        if violations:
            print(json.dumps({"violations": violations}, indent=2))
            return 3
        print("self-check: all invariants hold")

    print(f"solved: {len(solution.xgrid)} nodes, bracket_gap={solution.bracket_gap:.3e}, "
          f"verdict={solution.saddle.verdict}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
