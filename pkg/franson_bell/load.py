"""Subcommand for validating a scenario or scan plan and dumping it to the output"""

import sys
from pathlib import Path
from typing import Optional

import click

from franson_bell.experiment import emit_plan, read_plan
from franson_bell.presets import PRESETS
from franson_bell.scenario import ScenarioConfig, emit_scenario, read_scenario


def resolve_scenario(
    scenario_path: Optional[Path], preset: Optional[str]
) -> ScenarioConfig:
    """Read the scenario file or build the preset, exactly one of which must be given

    :param scenario_path: Path to a scenario YAML file
    :param preset: Name of a built-in preset
    :return: The validated scenario
    :raises click.UsageError: If neither or both are given

    """
    if (scenario_path is None) == (preset is None):
        raise click.UsageError("Give exactly one of --scenario and --preset")
    if scenario_path is not None:
        return read_scenario(scenario_path)
    assert preset is not None
    return PRESETS[preset]()


@click.command()
@click.option(
    "--scenario",
    "scenario_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Scenario YAML file to validate",
)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), help="Built-in scenario")
@click.option(
    "--plan",
    "plan_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Validate and dump this scan plan instead of a scenario",
)
def load(
    scenario_path: Optional[Path], preset: Optional[str], plan_path: Optional[Path]
) -> None:
    """Validate a scenario or scan plan and dump it as YAML with defaults filled in
    \f

    :param scenario_path: Path to a scenario YAML file
    :param preset: Name of a built-in preset
    :param plan_path: Path to a scan plan YAML file

    """
    if plan_path is not None:
        sys.stdout.write(emit_plan(read_plan(plan_path)))
        return
    sys.stdout.write(emit_scenario(resolve_scenario(scenario_path, preset)))
