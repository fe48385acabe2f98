"""Command line entry point: ``dirac-homog <stage> --config scenario.json``.

Exit codes: 0 all checks pass, 2 invalid input, 3 a numerical check failed,
4 an iterative solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from . import __version__
from .config import validate_config
from .errors import NumericalCheckError, SolverError, ValidationError
from .pipeline import EXIT_NUMERICAL, EXIT_SOLVER, EXIT_VALIDATION, STAGES, collect_report, run_scenario

COMMANDS = {"cell": ("cell",), "tensor": ("tensor",), "bulk": ("bulk",), "edge": ("edge",), "bench": ("bench",),
            "all": STAGES}


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get("DIRAC_HOMOG_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ValidationError(f"DIRAC_HOMOG_THREADS must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dirac-homog", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "report", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario JSON file")
        if name == "validate":
            continue
        p.add_argument("--out", help="output directory (overrides the config's 'output')")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default DIRAC_HOMOG_THREADS or 1)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "all":
            p.add_argument("--stages", default=",".join(STAGES), help="comma separated subset of " + ",".join(STAGES))
    return ap


def _summary(report) -> str:
    lines = [f"config {report.config_hash[:12]}  exit {report.exit_code}"]
    for c in report.checks:
        tol = f" (tol {c['tolerance']})" if "tolerance" in c else ""
        lines.append(f"  {'PASS' if c['pass'] else 'FAIL'}  {c['name']} = {c['value']}{tol}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = validate_config(args.config)
        if args.command == "validate":
            print(f"ok {cfg.config_hash()}")
            return 0
        if args.command == "report":
            report = collect_report(cfg, args.out)
        else:
            stages = COMMANDS[args.command]
            if args.command == "all":
                stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
            threads = _threads(args.threads)
            with threadpool_limits(threads):
                report = run_scenario(cfg, stages, args.out, threads)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NumericalCheckError as exc:
        print(f"numerical check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(_summary(report))
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
