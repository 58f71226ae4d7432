"""Command-line entry point.

    artifact run --experiment tail-grid --horizon reduced --jobs 4
    artifact run --check-analytic
    artifact check-analytic
    artifact list-experiments
    artifact validate-config --config my.cfg

Outputs go to ``--out``, else ``$ARTIFACT_OUT``, else ``./artifact-runs``.
Configuration errors exit with status 2.  Acceptance-band failures are
results, so they are written to the summary and the run still exits 0.
"""

import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .analytic import (AdoptionGameSpec, bifurcation_sweep, hysteresis_loop, sweep_rows,
                       sweep_summary)
from .checks import run_battery
from .config import load_config
from .errors import ConfigError
from .experiments import DESCRIPTIONS, FULL_T, KINDS, REDUCED_T, run_experiment
from .io import dump_json, run_hash, write_csv, write_report

OUT_ENV = "ARTIFACT_OUT"
DEFAULT_OUT = "artifact-runs"
CONFIG_ERROR_EXIT = 2


def default_out():
    return os.environ.get(OUT_ENV, DEFAULT_OUT)


def horizon_name(n_periods):
    return {FULL_T: "full", REDUCED_T: "reduced"}.get(n_periods, "custom")


def _fail_config(exc):
    click.echo(f"config error: {exc}", err=True)
    sys.exit(CONFIG_ERROR_EXIT)


def _battery(out=None):
    results = run_battery()
    for r in results:
        click.echo(r.line())
    if out is not None:
        out = Path(out) / "check-analytic"
        out.mkdir(parents=True, exist_ok=True)
        spec, grid = AdoptionGameSpec(), np.linspace(0.0, 2.0, 401)
        fwd = bifurcation_sweep(spec, grid, "forward")
        header, rows = sweep_rows(fwd)
        write_csv(out / "bifurcation-forward.csv", header, rows)
        summary = {"forward": sweep_summary(fwd)}
        for kappa in (0.0, 0.01, 0.02, 0.04):
            bwd = bifurcation_sweep(spec, grid, "backward", kappa, 2520)
            header, rows = sweep_rows(bwd)
            write_csv(out / f"bifurcation-backward-kappa{kappa:g}.csv", header, rows)
            summary[f"backward_kappa{kappa:g}"] = sweep_summary(bwd)
            summary[f"gap_kappa{kappa:g}"] = hysteresis_loop(spec, grid, kappa, 2520).hysteresis_gap
        dump_json(out / "bifurcation.json", summary)
        click.echo(f"bifurcation sweeps written to {out}")
    return all(r.passed for r in results)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="artifact")
def main():
    """Closed-form checks and agent-based experiments for AI-correlated markets."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="Key-value config file; unset keys take the calibrated defaults.")
@click.option("--experiment", type=click.Choice(KINDS), help="Experiment to run (default: calibration).")
@click.option("--seed", type=int, help="Master seed (default 0, or the config's 'seed').")
@click.option("--out", type=click.Path(file_okay=False),
              help=f"Output root (default ${OUT_ENV} or ./{DEFAULT_OUT}).")
@click.option("--jobs", type=click.IntRange(min=1), help="Worker processes (default 1).")
@click.option("--horizon", type=click.Choice(["full", "reduced"]),
              help=f"full: T = {FULL_T}, reduced: T = {REDUCED_T} (default: the config's n_periods).")
@click.option("--check-analytic", is_flag=True, help="Run the closed-form battery instead of an experiment.")
def run(config_path, experiment, seed, out, jobs, horizon, check_analytic):
    """Run one experiment and write cells.csv, summary.json, table.txt and manifest.json."""
    if check_analytic:
        _battery(out)
        return
    try:
        _, spec = load_config(config_path, {"experiment": experiment, "seed": seed, "jobs": jobs,
                                            "horizon": horizon})
    except ConfigError as exc:
        _fail_config(exc)
    t0 = time.perf_counter()
    report = run_experiment(spec)
    path = write_report(report, spec, out or default_out(), config_path,
                        horizon_name(spec.base.n_periods))
    click.echo(report.table)
    n_fail = sum(not v for v in report.checks.values())
    click.echo(f"{spec.kind}: {len(report.checks) - n_fail}/{len(report.checks)} checks passed "
               f"in {time.perf_counter() - t0:.1f}s -> {path}")


@main.command("check-analytic")
@click.option("--out", type=click.Path(file_okay=False),
              help="Also write the bifurcation sweep CSV/JSON under this directory.")
def check_analytic(out):
    """Closed-form test battery (no simulation). Exits 1 if any check fails."""
    if not _battery(out):
        sys.exit(1)


@main.command("list-experiments")
def list_experiments():
    """Show the experiment kinds accepted by --experiment."""
    width = max(map(len, KINDS))
    for k in KINDS:
        click.echo(f"{k.ljust(width)}  {DESCRIPTIONS[k]}")


@main.command("validate-config")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
def validate_config(config_path):
    """Parse and validate a config file without running anything."""
    try:
        params, spec = load_config(config_path)
    except ConfigError as exc:
        _fail_config(exc)
    click.echo(f"ok: experiment={spec.kind} seeds={spec.seeds} seed={spec.master_seed} "
               f"T={params.n_periods} config_hash={run_hash(spec)}")


if __name__ == "__main__":
    main()
