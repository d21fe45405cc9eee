"""Command line entry point: ``puzzlelab run`` and ``puzzlelab report``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import report as report_mod
from .errors import InfeasibleNoise, QubitCapExceeded
from .runner import ConfigError, run_experiment

EXIT_OK = 0
EXIT_VERDICT_FAIL = 1
EXIT_SCHEMA = 3
EXIT_INFEASIBLE_NOISE = 4
EXIT_QUBIT_CAP = 5
EXIT_MALFORMED_ROWS = 6
EXIT_SCHEMA_CONFLICT = 7


@click.group()
def main() -> None:
    """Run reduction experiments and aggregate their results."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--strict", is_flag=True, help="Exit with status 1 when the verdict is fail.")
def run(config_path: str, out_dir: str, strict: bool) -> None:
    """Run the experiment described by a JSON config."""
    try:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        click.echo(f"config is not valid JSON: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    if not isinstance(raw, dict):
        click.echo("config must be a JSON object", err=True)
        sys.exit(EXIT_SCHEMA)
    try:
        result = run_experiment(raw)
    except ConfigError as exc:
        click.echo(f"schema violation: {exc}", err=True)
        sys.exit(EXIT_SCHEMA)
    except InfeasibleNoise as exc:
        click.echo(f"infeasible noise spec: {exc}", err=True)
        sys.exit(EXIT_INFEASIBLE_NOISE)
    except QubitCapExceeded as exc:
        click.echo(f"qubit cap exceeded: {exc}", err=True)
        sys.exit(EXIT_QUBIT_CAP)
    out = result.write(out_dir)
    verdict = "pass" if result.passed else "fail"
    click.echo(f"{result.config['experiment']} [{result.config_hash}] {verdict} -> {out}")
    if strict and not result.passed:
        sys.exit(EXIT_VERDICT_FAIL)


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
def report(in_dir: str) -> None:
    """Aggregate every rows.csv under a directory."""
    try:
        table = report_mod.build_report(in_dir)
    except report_mod.MalformedRows as exc:
        for line in exc.problems:
            click.echo(line, err=True)
        sys.exit(EXIT_MALFORMED_ROWS)
    except report_mod.SchemaConflict as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_SCHEMA_CONFLICT)
    (Path(in_dir) / "report.csv").write_text(report_mod.report_csv(table), encoding="utf-8", newline="\n")
    click.echo(report_mod.report_text(table), nl=False)


if __name__ == "__main__":
    main()
