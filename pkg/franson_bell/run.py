"""Subcommand for simulating a phase scan and writing its report"""

import logging
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import click

from franson_bell.experiment import (
    DEFAULT_POINTS,
    EXPERIMENT1,
    EXPERIMENT2,
    MODES,
    default_plan,
    read_plan,
    run_experiment,
)
from franson_bell.load import resolve_scenario
from franson_bell.montecarlo import DEFAULT_MAX_EXPECTED_TAGS
from franson_bell.presets import PRESETS
from franson_bell.report import FORMATS, emit_report
from franson_bell.scenario import PassiveChoice

logger = logging.getLogger(__name__)


def parse_formats(value: str) -> List[str]:
    """Split a comma separated list of report formats

    :param value: E.g. ``json,csv``
    :return: The formats in the given order
    :raises click.BadParameter: On an unknown format

    """
    formats = [item.strip() for item in value.split(",") if item.strip()]
    for report_format in formats:
        if report_format not in FORMATS:
            raise click.BadParameter(
                f"{report_format!r} is not one of {', '.join(FORMATS)}",
                param_hint="--format",
            )
    if not formats:
        raise click.BadParameter("no formats given", param_hint="--format")
    return formats


@click.command()
@click.option(
    "--scenario",
    "scenario_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Scenario YAML file",
)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), help="Built-in scenario")
@click.option(
    "--plan",
    "plan_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Scan plan YAML file; by default a full-fringe grid is scanned",
)
@click.option(
    "--mode", type=click.Choice(MODES), help="Experiment, by default from the scenario"
)
@click.option(
    "--seed", type=click.IntRange(0, 2**64 - 1), help="Override the scenario seed"
)
@click.option(
    "--out",
    "output_directory",
    default="./out",
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory to write the report into",
)
@click.option(
    "--format",
    "formats",
    default="json,csv",
    help="Comma separated: json, csv, summary",
)
@click.option(
    "--points",
    type=click.IntRange(min=1),
    default=DEFAULT_POINTS,
    help="Grid scan points",
)
@click.option(
    "--integration",
    type=click.FloatRange(min=0, min_open=True),
    help="Seconds per grid point, by default the scenario's integration time",
)
@click.option(
    "--workers", type=click.IntRange(min=1), default=1, help="Worker processes"
)
@click.option(
    "--max-tags",
    type=click.FloatRange(min=0, min_open=True),
    default=DEFAULT_MAX_EXPECTED_TAGS,
    help="Refuse acquisitions expected to produce more time tags than this",
)
@click.option(
    "--dump-tags",
    "dump_directory",
    type=click.Path(file_okay=False, path_type=Path),
    help="Also write the time tags of every scan point into this directory",
)
def run(
    scenario_path: Optional[Path],
    preset: Optional[str],
    plan_path: Optional[Path],
    mode: Optional[str],
    seed: Optional[int],
    output_directory: Path,
    formats: str,
    points: int,
    integration: Optional[float],
    workers: int,
    max_tags: float,
    dump_directory: Optional[Path],
) -> None:
    """Simulate a phase scan and write the report
    \f

    :param scenario_path: Path to a scenario YAML file
    :param preset: Name of a built-in preset
    :param plan_path: Path to a scan plan YAML file
    :param mode: ``experiment1`` or ``experiment2``
    :param seed: Root seed replacing the scenario's
    :param output_directory: Directory for the report files
    :param formats: Comma separated report formats
    :param points: Number of points of the default grid
    :param integration: Seconds per point of the default grid
    :param workers: Number of processes simulating scan points
    :param max_tags: Expected tag limit per acquisition
    :param dump_directory: Directory for time-tag dumps

    """
    report_formats = parse_formats(formats)
    scenario = resolve_scenario(scenario_path, preset)
    if seed is not None:
        scenario = replace(scenario, rng_seed=seed)
    if plan_path is not None:
        plan = read_plan(plan_path)
    else:
        if mode is None:
            passive = isinstance(scenario.analyzer_b, PassiveChoice)
            mode = EXPERIMENT2 if passive else EXPERIMENT1
        if integration is None:
            integration = scenario.coincidence.integration_time
        plan = default_plan(mode, points, integration)
    logger.info(
        "Running %s with %d points, seed %d",
        plan.mode,
        len(plan.points),
        scenario.rng_seed,
    )
    report = run_experiment(scenario, plan, workers, max_tags, dump_directory)
    emit_report(report, output_directory, report_formats)
    click.echo(f"Run {report.identifier}: {output_directory}")
    for result in report.bell:
        significance = "" if result.n_sigma is None else f" ({result.n_sigma:.1f} σ)"
        click.echo(
            f"  S {result.mode} {result.variant}:"
            f" {result.S:.3f} ± {result.sigma_S:.3f}{significance}"
        )
