"""Subcommand for closed-form predictions of a scenario, without simulation"""

import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Union

import click

from franson_bell.bell import TWO_SQRT_2, qber, violates_bell
from franson_bell.experiment import curve_names
from franson_bell.load import resolve_scenario
from franson_bell.montecarlo import expected_rates
from franson_bell.presets import PRESETS
from franson_bell.quantum import TimePeak, outcome_distribution, predicted_E
from franson_bell.scenario import ScenarioConfig, yaml

Value = Union[float, bool, str, Dict[str, float], List[Dict[str, float]]]


def predictions(scenario: ScenarioConfig, points: int) -> Dict[str, Value]:
    """Expected fringe, Bell parameters, QBER and count rates of a scenario

    :param scenario: The scenario
    :param points: Number of phase sums on the predicted fringe
    :return: A document ready to be dumped as YAML

    """
    rates = expected_rates(scenario)
    source = scenario.source
    duration = scenario.coincidence.integration_time
    curves = curve_names(scenario)
    visibility_raw = {name: rates.raw_visibility(name) for name in curves}
    main_raw = visibility_raw[curves[0]]
    fringe = []
    for index in range(points):
        phase_sum = 2 * math.pi * index / points
        E_net = predicted_E(
            phase_sum, 0.0, source.intrinsic_visibility, source.phase_offset
        )
        fringe.append(
            {
                "phase_sum": phase_sum,
                "E_net": E_net,
                "E_raw": E_net * main_raw / source.intrinsic_visibility
                if source.intrinsic_visibility > 0
                else 0.0,
            }
        )
    distribution = outcome_distribution(
        0.0, 0.0, source.intrinsic_visibility, source.phase_offset
    )
    error_rate = qber(main_raw)
    return {
        "visibility_net": source.intrinsic_visibility,
        "visibility_raw": visibility_raw,
        "S_raw": TWO_SQRT_2 * main_raw,
        "S_net": TWO_SQRT_2 * source.intrinsic_visibility,
        "qber": error_rate,
        "below_bell_threshold": violates_bell(error_rate),
        "central_peak_fraction": math.fsum(
            p
            for (peak, _, _), p in distribution.probabilities.items()
            if peak is TimePeak.CENTRAL
        ),
        "singles": dict(rates.singles),
        "true_coincidences_per_integration": {
            f"{a}/{b}": rate * duration
            for (a, b), rate in rates.true_coincidences.items()
        },
        "accidentals_per_integration": {
            f"{a}/{b}": rate * duration for (a, b), rate in rates.accidentals.items()
        },
        "fringe": fringe,
    }


@click.command()
@click.option(
    "--scenario",
    "scenario_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help="Scenario YAML file",
)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), help="Built-in scenario")
@click.option(
    "--points", type=click.IntRange(min=1), default=12, help="Points on the fringe"
)
def predict(scenario_path: Optional[Path], preset: Optional[str], points: int) -> None:
    """Print closed-form fringe, Bell parameters and count rates as YAML
    \f

    :param scenario_path: Path to a scenario YAML file
    :param preset: Name of a built-in preset
    :param points: Number of phase sums on the predicted fringe

    """
    yaml.dump(predictions(resolve_scenario(scenario_path, preset), points), sys.stdout)
