"""Small, bright scenarios which simulate in well under a second per acquisition

With 2·10⁵ pairs per second, 30 % detection efficiency and no fiber loss every
detector sees about 30 kHz, and each port pair about a thousand true
coincidences per second against half an accidental.

"""

import math
from dataclasses import replace

import pytest

from franson_bell.experiment import EXPERIMENT1, ScanPlan, default_plan, run_experiment1
from franson_bell.report import ExperimentReport
from franson_bell.scenario import (
    Analyzer,
    CoincidenceParams,
    DetectorParams,
    FiberLink,
    InterferometerParams,
    PassiveChoice,
    ScenarioConfig,
    SourceParams,
)

BRIGHT_VISIBILITY = 0.9
BRIGHT_POINTS = 8
BRIGHT_INTEGRATION_TIME = 0.5
BRIGHT_DETECTOR = DetectorParams(
    efficiency=0.3, dark_rate=100.0, timing_jitter_sigma=100e-12
)


def _bright(analyzer_b: Analyzer) -> ScenarioConfig:
    detectors = {"a+": BRIGHT_DETECTOR, "a-": BRIGHT_DETECTOR}
    if isinstance(analyzer_b, PassiveChoice):
        detectors.update({"b1+": BRIGHT_DETECTOR, "b2+": BRIGHT_DETECTOR})
    else:
        detectors.update({"b+": BRIGHT_DETECTOR, "b-": BRIGHT_DETECTOR})
    return ScenarioConfig(
        source=SourceParams(pair_rate=2e5, intrinsic_visibility=BRIGHT_VISIBILITY),
        link_a=FiberLink(length=1.0, attenuation=0.0),
        link_b=FiberLink(length=2.0, attenuation=0.0),
        analyzer_a=InterferometerParams(),
        analyzer_b=analyzer_b,
        detectors=detectors,
        coincidence=CoincidenceParams(integration_time=1.0),
        rng_seed=7,
    )


@pytest.fixture(scope="session")
def bright_scenario() -> ScenarioConfig:
    """Two two-channel analyzers"""
    return _bright(InterferometerParams())


@pytest.fixture(scope="session")
def bright_passive_scenario() -> ScenarioConfig:
    """A passive choice between single-channel analyzers at phases 0 and -π/2"""
    return _bright(
        PassiveChoice(
            b1=InterferometerParams(phase=0.0, two_channel=False),
            b2=InterferometerParams(phase=-math.pi / 2, two_channel=False),
        )
    )


@pytest.fixture(scope="session")
def bright_plan() -> ScanPlan:
    """Eight half-second points around the fringe"""
    plan = default_plan(EXPERIMENT1, BRIGHT_POINTS, BRIGHT_INTEGRATION_TIME)
    return replace(plan, calibration_time=BRIGHT_INTEGRATION_TIME)


@pytest.fixture(scope="session")
def bright_report(
    bright_scenario: ScenarioConfig, bright_plan: ScanPlan
) -> ExperimentReport:
    return run_experiment1(bright_scenario, bright_plan)
