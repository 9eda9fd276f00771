"""Command line driver: ``webfem {check,solve,converge} --config FILE``.

Exit status: 0 success, 1 solver or discretization failure, 2 invalid
config or arguments, 3 failed coercivity gate without override.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings
from dataclasses import asdict

from .basis import NoInteriorCellError, UnderResolvedError
from .config import ConfigError, load_config
from .export import export_field, write_atomic, write_json
from .problem import NotEllipticError, WellposednessError, check_wellposedness, enforce_gate
from .solve import NonConvergenceError, SingularMatrixError, convergence_study, run_case
from .assembly import dump_system

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_GATE = 0, 1, 2, 3


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry by dotted path, e.g. grid.h=0.05")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--format", choices=("csv", "vtk"), help="field export format")
    common.add_argument("--override-gate", action="store_true",
                        help="continue when the sufficient coercivity condition fails")
    p = argparse.ArgumentParser(prog="webfem", description="WEB-spline finite elements on implicit domains")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="sampled coercivity check of the problem")
    sub.add_parser("solve", parents=[common], help="solve for the first (n, h) of the config")
    sub.add_parser("converge", parents=[common], help="error and condition study over all (n, h)")
    return p


def _load(args):
    cfg = load_config(args.config, args.set)
    if args.out:
        cfg.output.dir = args.out
    if args.format:
        cfg.output.format = args.format
    if args.override_gate:
        cfg.solver.override_gate = True
    return cfg


def _gate(cfg, problem, out):
    report = check_wellposedness(problem)
    print(f"coercivity: {report}", file=out)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        enforce_gate(report, cfg.solver.override_gate)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return report


def cmd_check(cfg, out):
    problem = cfg.build_problem()
    report = _gate(cfg, problem, out)
    return EXIT_OK if report.passed or cfg.solver.override_gate else EXIT_GATE


def cmd_solve(cfg, out):
    problem = cfg.build_problem()
    report = _gate(cfg, problem, out)
    h, n = cfg.grid.h[0], cfg.grid.n[0]
    row, sol = run_case(problem, h, n, cfg.quadrature, cfg.solver.method, cfg.solver.tol,
                        condition=cfg.solver.condition, residual=True)
    directory = cfg.output.dir
    field_path = os.path.join(directory, f"field.{cfg.output.format}")
    export_field(sol, cfg.output.resolution, cfg.output.format, field_path)
    stats = sol.meta["solver"]
    summary = {
        "n": n, "h": h, "N": row["N"], "unknowns": 2 * row["N"],
        "e": row["e"], "L2": row["L2"], "H1": row["H1"], "cond": row["cond"],
        "solver": asdict(stats), "gate": asdict(report), "field": os.path.basename(field_path),
    }
    if cfg.output.dump_system:
        dump_system(sol.meta["system"], directory)
    write_json(os.path.join(directory, "summary.json"), summary)
    print(f"n={n} h={h:g} N={row['N']} solver={stats.method} iterations={stats.iterations} "
          f"residual={stats.residual:.3e}", file=out)
    if row["e"] is not None:
        print(f"relative residual e = {row['e']:.6e}", file=out)
    if row["H1"] is not None:
        print(f"errors: L2 = {row['L2']:.6e}  H1 = {row['H1']:.6e}", file=out)
    print(f"wrote {field_path} and summary.json", file=out)
    return EXIT_OK


def cmd_converge(cfg, out):
    problem = cfg.build_problem()
    _gate(cfg, problem, out)
    report = convergence_study(problem, cfg.grid.h, cfg.grid.n, cfg.quadrature, cfg.solver.method,
                               cfg.solver.tol, condition=cfg.solver.condition, residual=True)
    directory = cfg.output.dir
    write_atomic(os.path.join(directory, "convergence.csv"), report.to_csv(cfg.output.timing))
    table = report.to_table()
    write_atomic(os.path.join(directory, "convergence.txt"), table + "\n")
    print(table, file=out)
    failed = [r for r in report.rows if "error" in r]
    for r in failed:
        print(f"error: n={r['n']} h={r['h']:g}: {r['error']}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "converge": cmd_converge}


def main(argv=None, out=None):
    out = out or sys.stdout
    args = _parser().parse_args(argv)
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, NotEllipticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WellposednessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (NonConvergenceError, SingularMatrixError, NoInteriorCellError, UnderResolvedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:  # e.g. non-smooth manufactured solution
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
