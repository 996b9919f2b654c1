"""Command-line interface for mfgpen.

Three batch commands share one JSON configuration:

    mfgpen solve  --config cfg.json --level 100   # one penalty level
    mfgpen sweep  --config cfg.json               # the whole ladder and the limit
    mfgpen verify --config cfg.json               # the verification suite

Exit codes: 0 success, 1 failed verification, 2 configuration or assumption
error, 3 solver error.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Optional

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from mfgpen import __version__
from mfgpen.config import RunConfig
from mfgpen.errors import CoefficientEvaluationError, ConfigError, MfgPenError
from mfgpen.io import config_digest, format_csv, format_json, level_name, load_config
from mfgpen.io.formatters import (ladder_columns, level_columns, level_summary, limit_columns,
                                  limit_summary, write_text)
from mfgpen.model import ProbeGrid, validate_assumptions
from mfgpen.solvers import (PenaltyLadder, build_constrained_solution, check_psi_envelope,
                            check_riccati_envelope, estimate_u_infinity, evaluate_costs,
                            run_ladder, simulate_level)
from mfgpen.solvers.field import LevelChecks, field_probes, solve_level
from mfgpen.verify import run_full_suite

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger("mfgpen.cli")


def configure_logging(verbose: int):
    """Route log records through rich on stderr; -v gives INFO, -vv DEBUG."""
    level = os.environ.get("MFGPEN_LOG_LEVEL")
    if level is None:
        level = {0: "WARNING", 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(level=level.upper(), format="%(message)s", datefmt="[%X]",
                        handlers=[RichHandler(console=err_console, show_path=False)],
                        force=True)


def fail(message: str, code: int):
    err_console.print(f"[bold red]error:[/bold red] {escape(message)}")
    sys.exit(code)


def exit_code_for(error: MfgPenError) -> int:
    if isinstance(error, (ConfigError, CoefficientEvaluationError)):
        return EXIT_CONFIG
    return EXIT_SOLVER


def load_run(config_path: str, seed: Optional[int], out: Optional[str]):
    """Load the configuration; return it with the output directory and digest."""
    try:
        config = load_config(config_path, seed)
    except ConfigError as e:
        fail(f"{config_path}: {e}", EXIT_CONFIG)
    out_dir = Path(out if out is not None else config.output)
    return config, out_dir, config_digest(config)


def require_assumptions(config: RunConfig):
    """Exit with code 2 naming the first failing clause."""
    try:
        report = validate_assumptions(config.coefficients,
                                      ProbeGrid.default(config.coefficients, config.law),
                                      config.law)
    except MfgPenError as e:
        fail(str(e), exit_code_for(e))
    if not report.passed:
        first = report.failures()[0]
        fail(f"assumption clause '{first.name}' fails (margin {first.worst_margin:.3e} "
             f"at t={first.worst_t}, x={first.worst_x})", EXIT_CONFIG)


def common_options(func):
    """--config, --out, --threads and --seed with their environment overrides."""
    options = [
        click.option("--config", "config_path", envvar="MFGPEN_CONFIG", required=True,
                     help="JSON run configuration."),
        click.option("--out", envvar="MFGPEN_OUT", default=None,
                     help="Output directory (default: the config's 'output')."),
        click.option("--threads", envvar="MFGPEN_THREADS", type=click.IntRange(min=1),
                     default=1, show_default=True, help="Workers for level solves."),
        click.option("--seed", envvar="MFGPEN_SEED", type=click.IntRange(min=0), default=None,
                     help="Override the seed of the initial law."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
@click.version_option(__version__, prog_name="mfgpen")
def main(verbose: int):
    """mfgpen: penalized mean field games with a terminal constraint."""
    configure_logging(verbose)


@main.command()
@common_options
@click.option("--level", "level", envvar="MFGPEN_LEVEL", type=float, default=None,
              help="Penalty level (default: the largest level of the ladder).")
def solve(config_path, out, threads, seed, level):
    """Solve one penalty level and write level_<L>.csv and level_<L>.json."""
    config, out_dir, digest = load_run(config_path, seed, out)
    require_assumptions(config)
    c, g, law, tol = config.coefficients, config.grid, config.law, config.tolerances
    L = float(level) if level is not None else config.ladder[-1]
    if not L > 0:
        fail(f"--level must be positive, got {L:g}", EXIT_CONFIG)
    try:
        solution = solve_level(c, L, law.mean, g, tol)
        bundle = simulate_level(c, L, law, solution.riccati, solution.flow, g)
        checks = LevelChecks(check_riccati_envelope(solution.riccati, c, tol.envelope_slack),
                             check_psi_envelope(solution.flow, c, tol.envelope_slack))
        cost = evaluate_costs(bundle, c)
    except MfgPenError as e:
        fail(str(e), exit_code_for(e))

    name = level_name(L)
    write_text(out_dir / f"{name}.csv",
               format_csv(level_columns(solution, bundle, config.samples_in_csv), digest))
    write_text(out_dir / f"{name}.json",
               format_json(level_summary(solution, bundle, checks, cost, digest)))

    table = Table(title=f"level L={L:g}")
    for column in ("P_0", "nu_T", "mean X_T", "J^L", "envelopes"):
        table.add_column(column, justify="right")
    table.add_row(f"{solution.riccati.values[0]:.10g}", f"{solution.flow.nu[-1]:.4e}",
                  f"{float(bundle.X_mean[-1]):.4e}", f"{cost.expected:.10g}",
                  "ok" if checks.passed else "violated")
    console.print(table)
    console.print(f"wrote {out_dir / name}.csv and .json")


@main.command()
@common_options
def sweep(config_path, out, threads, seed):
    """Solve the ladder and the constrained limit; write ladder.csv, limit.csv, limit.json."""
    config, out_dir, digest = load_run(config_path, seed, out)
    require_assumptions(config)
    c, g, law, tol = config.coefficients, config.grid, config.law, config.tolerances
    try:
        ladder = run_ladder(c, PenaltyLadder(config.ladder), law.mean, g, tol, threads)
        bundles = [simulate_level(c, lv.L, law, lv.riccati, lv.flow, g) for lv in ladder]
        costs = [evaluate_costs(b, c) for b in bundles]
        limit_field = None
        if len(ladder) >= 3:
            probes = config.probes
            limit_field = estimate_u_infinity(
                ladder, field_probes(g, probes.times, probes.x, probes.nu),
                slack=tol.u_monotone_slack)
        limit = build_constrained_solution(c, ladder, law, g, tol)
        limit_cost = evaluate_costs(limit, c)
    except MfgPenError as e:
        fail(str(e), exit_code_for(e))

    write_text(out_dir / "ladder.csv", format_csv(ladder_columns(bundles, costs, limit_field),
                                                  digest))
    write_text(out_dir / "limit.csv", format_csv(limit_columns(limit, config.samples_in_csv),
                                                 digest))
    write_text(out_dir / "limit.json",
               format_json(limit_summary(limit, limit_field, limit_cost, digest)))

    table = Table(title="penalty ladder")
    for column in ("L", "P_0", "mean X_T", "J^L"):
        table.add_column(column, justify="right")
    for level, bundle, cost in zip(ladder, bundles, costs):
        table.add_row(f"{level.L:g}", f"{level.riccati.values[0]:.10g}",
                      f"{float(bundle.X_mean[-1]):.4e}", f"{cost.expected:.10g}")
    console.print(table)
    for warning in limit.warnings:
        err_console.print(f"[yellow]warning:[/yellow] {warning}")
    console.print(f"wrote ladder.csv, limit.csv and limit.json to {out_dir}")


@main.command()
@common_options
def verify(config_path, out, threads, seed):
    """Run the verification suite and write report.json; exit 0 iff every check passes."""
    config, out_dir, digest = load_run(config_path, seed, out)
    try:
        report = run_full_suite(config.coefficients, config.ladder, config.law, config.grid,
                                config.probes, config.tolerances, threads, digest)
    except MfgPenError as e:
        fail(str(e), exit_code_for(e))
    write_text(out_dir / "report.json", format_json(report.to_dict()))

    table = Table(title="verification")
    for column in ("check", "status", "worst margin", "reason"):
        table.add_column(column)
    styles = {"pass": "green", "fail": "bold red", "skipped": "yellow"}
    for check in report.checks:
        status = check.status.value
        margin = "" if check.worst_margin is None else f"{check.worst_margin:.3e}"
        table.add_row(check.name, f"[{styles[status]}]{status}[/{styles[status]}]", margin,
                      check.reason or "")
    console.print(table)
    sys.exit(EXIT_OK if report.passed else EXIT_VERIFY_FAILED)


if __name__ == "__main__":
    main()
