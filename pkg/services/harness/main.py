#!/usr/bin/env python3
# services/harness/main.py
"""
Command-line entry point: single solves, convergence studies and kernel dumps

    python -m services.harness.main solve --example kirchhoff-sin --alpha 0.5 --delta-optimal --grid 8 --steps 20
    python -m services.harness.main study --preset table-2 --plot table2.svg
    python -m services.harness.main kernels --alpha 0.5 --steps 4 --delta 2
"""

import argparse
import csv
import json
import sys
from typing import List, Optional

from shared import __version__
from shared.config import get_settings
from shared.exceptions import ConfigurationError, SolverException
from shared.logging import log_context, setup_logging, setup_logging_config
from shared.models import StudyReport, StudyRow

from services.solver.fractional_time import build_graded_mesh, l1_kernels, optimal_grading
from services.solver.problems import PROBLEMS, get_problem
from services.solver.scheme import build_problem, run

from .config import parse_value, load_study_config
from .plot import emit_loglog_plot
from .presets import PRESETS, preset_configs, run_preset
from .report import write_report
from .study import run_study

logger = setup_logging("harness", get_settings().LOG_LEVEL)

# short names for the two manufactured problems
EXAMPLE_ALIASES = {"5.1": "kirchhoff-sin", "5.2": "kirchhoff-poly"}


def _example(value: str) -> str:
    value = EXAMPLE_ALIASES.get(value, value)
    if value not in PROBLEMS:
        raise argparse.ArgumentTypeError(f"unknown example '{value}' (choose from {sorted(PROBLEMS)} or 5.1/5.2)")
    return value


def _csv_list(key: str):
    def parse(value: str):
        try:
            return parse_value(key, value)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad {key} list '{value}': {exc}")
    return parse


def _add_delta(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument('--delta', type=float, help='Grading exponent delta >= 1')
    group.add_argument('--delta-optimal', action='store_true', help='Use delta = (2 - alpha) / alpha')


def _add_memory_closure(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--memory-closure', dest='memory_closure', choices=['implicit', 'explicit'],
                        help='Last memory interval: trapezoid through U^n or left rectangle '
                             '(default: KFRAC_MEMORY_CLOSURE)')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kfrac", description="L1 Galerkin solver and convergence harness for fractional Kirchhoff problems")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    parser.add_argument('--log-level', help='Override KFRAC_LOG_LEVEL')
    parser.add_argument('--log-format', choices=['json', 'text'], help='Override KFRAC_LOG_FORMAT')
    sub = parser.add_subparsers(dest='command', required=True)

    solve = sub.add_parser('solve', help='Run one configuration and report max-over-levels errors')
    solve.add_argument('--example', type=_example, required=True, help='kirchhoff-sin (5.1) or kirchhoff-poly (5.2)')
    solve.add_argument('--alpha', type=float, required=True)
    _add_delta(solve)
    solve.add_argument('--grid', type=int, required=True, help='Spatial subdivisions P per side')
    solve.add_argument('--steps', type=int, required=True, help='Time steps N')
    solve.add_argument('--T', type=float, default=1.0, help='Final time')
    solve.add_argument('--allow-long', action='store_true', help='Permit N above the long-run threshold')
    _add_memory_closure(solve)
    solve.add_argument('--out', help='Output file (stdout if omitted)')
    solve.add_argument('--format', choices=['csv', 'json'], default='csv')

    study = sub.add_parser('study', help='Run a convergence study from a config file or preset')
    source = study.add_mutually_exclusive_group()
    source.add_argument('--config', help='key = value study file')
    source.add_argument('--preset', choices=sorted(PRESETS), help='Published table preset')
    study.add_argument('--problem', type=_example)
    study.add_argument('--alphas', type=_csv_list('alphas'), help='Comma-separated alpha values')
    study.add_argument('--deltas', type=_csv_list('deltas'), help="Comma-separated deltas or 'optimal'")
    study.add_argument('--axis', choices=['space', 'time'])
    study.add_argument('--grids', type=_csv_list('grids'), help='Comma-separated P values')
    study.add_argument('--steps', type=_csv_list('steps'), help='Comma-separated N values')
    study.add_argument('--n-rule', dest='n_rule',
                       help='explicit, coupled-2/alpha, coupled-2/(2-alpha), coupled-1/alpha, coupled-1/(2-alpha)')
    study.add_argument('--norm', choices=['l2', 'h1', 'both'])
    study.add_argument('--T', type=float)
    study.add_argument('--out', dest='output', help='Report file (stdout if omitted)')
    study.add_argument('--format', choices=['csv', 'json'])
    study.add_argument('--plot', help='Write a log-log SVG plot here')
    study.add_argument('--allow-long', action='store_true', help='Permit N above the long-run threshold')
    study.add_argument('--workers', type=int, help='Parallel solver runs')
    _add_memory_closure(study)
    study.add_argument('--include-timing', action='store_true', help='Keep wall time in JSON output')

    kernels = sub.add_parser('kernels', help='Print L1 kernel rows as CSV (n,j,k_nj)')
    kernels.add_argument('--alpha', type=float, required=True)
    kernels.add_argument('--steps', type=int, required=True)
    _add_delta(kernels)
    kernels.add_argument('--level', type=int, help='Only this level n (default: all levels)')
    kernels.add_argument('--T', type=float, default=1.0)
    return parser


def cmd_solve(args) -> int:
    delta = optimal_grading(args.alpha) if args.delta_optimal else args.delta
    limit = get_settings().LONG_RUN_STEPS
    if args.steps > limit and not args.allow_long:
        raise ConfigurationError(f"N={args.steps} > {limit:g} steps; pass --allow-long", key="allow_long")
    with log_context():
        problem = build_problem(get_problem(args.example, args.alpha), args.grid, args.steps, delta, args.T,
                                memory_closure=args.memory_closure)
        trace = run(problem)
    l2, h1 = trace.max_errors()
    row = StudyRow(alpha=args.alpha, delta=delta, P=args.grid, N=args.steps, l2_error=l2, h1_error=h1,
                   rate_parameter=float(args.grid), newton_iterations=trace.newton_iterations)
    report = StudyReport(problem=args.example, axis="space", rows=[row], wall_time=trace.wall_time,
                         version=__version__, metadata={"T": args.T, "memory_closure": problem.memory_closure})
    write_report(report, args.format, args.out)
    return 0


def _study_overrides(args) -> dict:
    keys = ['problem', 'alphas', 'deltas', 'axis', 'grids', 'steps', 'n_rule', 'norm', 'T',
            'output', 'format', 'plot', 'workers', 'memory_closure']
    overrides = {key: getattr(args, key) for key in keys}
    if args.allow_long:
        overrides['allow_long'] = True
    return overrides


def cmd_study(args) -> int:
    if args.preset:
        report = run_preset(args.preset, allow_long=args.allow_long, workers=args.workers,
                            memory_closure=args.memory_closure)
        config = preset_configs(args.preset, args.allow_long)[0]
        output, fmt, plot, norm = args.output, args.format or "csv", args.plot, config.norm
    else:
        config = load_study_config(args.config, _study_overrides(args))
        report = run_study(config)
        output, fmt, plot, norm = config.output, config.format, config.plot, config.norm

    write_report(report, fmt, output, include_timing=args.include_timing)
    if plot:
        emit_loglog_plot(report, norm, plot)
    failed = report.metadata.get("failed_runs", 0)
    if failed:
        logger.warning("Study finished with failed runs", extra={"failed_runs": failed})
    diverging = report.metadata.get("diverging_series")
    if diverging:
        logger.warning("Study has series whose errors grow under refinement", extra={"series": diverging})
    return 0


def cmd_kernels(args) -> int:
    delta = optimal_grading(args.alpha) if args.delta_optimal else args.delta
    mesh = build_graded_mesh(args.T, args.steps, delta)
    levels = [args.level] if args.level is not None else range(1, args.steps + 1)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["n", "j", "k_nj"])
    for n in levels:
        row = l1_kernels(mesh, args.alpha, n)
        for j, k in enumerate(row.kernels, start=1):
            writer.writerow([n, j, f"{k:.16e}"])
    return 0


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "kernels": cmd_kernels}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    log_level = args.log_level or settings.LOG_LEVEL
    setup_logging_config(log_level, args.log_format or settings.LOG_FORMAT)
    setup_logging("harness", log_level)

    try:
        return COMMANDS[args.command](args)
    except SolverException as exc:
        logger.error("Command failed", extra={"command": args.command, "error_code": exc.error_code})
        print(json.dumps(exc.to_dict(), default=str), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
