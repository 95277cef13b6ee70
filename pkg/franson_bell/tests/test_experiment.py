import math
from dataclasses import replace
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pytest

from franson_bell.bell import (
    FOUR_POINT,
    FROM_VISIBILITY,
    NET,
    RAW,
    REDUCED,
    FringeFit,
    InsufficientSpanError,
)
from franson_bell.experiment import (
    EXPERIMENT1,
    EXPERIMENT2,
    MAX_FITTED_S,
    NEAREST_OPTIMAL_GRID,
    PlanValidationError,
    PointCounts,
    ScanPlan,
    ScanPoint,
    ScheduleSpec,
    TopologyError,
    analyze_dump,
    assemble_report,
    check_schedule,
    default_plan,
    dump_name,
    emit_plan,
    expectations,
    load_plan,
    run_experiment,
    run_experiment1,
    run_experiment2,
    select_max_fitted_s,
    select_nearest_optimal,
)
from franson_bell.report import ExperimentReport, report_to_dict
from franson_bell.scenario import (
    DetectorParams,
    InterferometerParams,
    ScenarioConfig,
    ScenarioParseError,
)

TWO_SQRT_2 = 2 * math.sqrt(2)

GRID_PLAN = """\
schema_version: 1
mode: experiment1
grid: {points: 12, integration_time: 30.0}
"""

POINTS_PLAN = """\
schema_version: 1
mode: experiment2
calibration_time: 2.0
points:
  - {delta_1: 0.0}
  - {delta_1: 1.5, integration_time: 10.0}
"""


@pytest.mark.parametrize(
    "mode, selection",
    [(EXPERIMENT1, NEAREST_OPTIMAL_GRID), (EXPERIMENT2, MAX_FITTED_S)],
)
def test_default_plan(mode: str, selection: str) -> None:
    result = default_plan(mode, 12, 5.0)

    assert result.mode == mode
    assert result.chsh_selection == selection
    assert len(result.points) == 12
    assert all(point.integration_time == 5.0 for point in result.points)
    phase_sums = [point.delta_1 + (point.delta_2 or 0.0) for point in result.points]
    expect = [math.pi / 4 + index * math.pi / 6 for index in range(12)]
    assert phase_sums == pytest.approx(expect)


def test_default_plan_of_experiment1_moves_analyzer_a_twice_as_fast() -> None:
    result = default_plan(EXPERIMENT1, 4)

    assert [point.delta_2 for point in result.points] == pytest.approx(
        [0.0, math.pi / 6, math.pi / 3, math.pi / 2]
    )


def test_default_plan_of_experiment2_keeps_side_b_fixed() -> None:
    result = default_plan(EXPERIMENT2, 4)

    assert all(point.delta_2 is None for point in result.points)


@pytest.mark.parametrize(
    "build, field_path",
    [
        (lambda: ScanPlan("experiment3", (ScanPoint(0.0),)), "mode"),
        (
            lambda: ScanPlan(EXPERIMENT1, (ScanPoint(0.0),), chsh_selection="best"),
            "chsh_selection",
        ),
        (lambda: ScanPlan(EXPERIMENT1, ()), "points"),
        (
            lambda: ScanPlan(EXPERIMENT2, (ScanPoint(0.0), ScanPoint(1.0, 0.5))),
            "points[1].delta_2",
        ),
        (lambda: ScanPlan(EXPERIMENT1, (ScanPoint(math.nan),)), "points[0].delta_1"),
        (
            lambda: ScanPlan(EXPERIMENT1, (ScanPoint(0.0, math.inf),)),
            "points[0].delta_2",
        ),
        (
            lambda: ScanPlan(EXPERIMENT1, (ScanPoint(0.0, 0.0, 0.0),)),
            "points[0].integration_time",
        ),
        (
            lambda: ScanPlan(
                EXPERIMENT2, (ScanPoint(0.0),), (ScheduleSpec(0.4, 0.4, 20.0),)
            ),
            "schedules",
        ),
        (
            lambda: ScanPlan(
                EXPERIMENT1, (ScanPoint(0.0),), (ScheduleSpec(3.0, 3.0, 20.0),)
            ),
            "schedules[0].bins",
        ),
        (
            lambda: ScanPlan(
                EXPERIMENT1, (ScanPoint(0.0),), (ScheduleSpec(0.1, 0.1, 20.0, bins=3),)
            ),
            "schedules[0].bins",
        ),
        (
            lambda: ScanPlan(
                EXPERIMENT1, (ScanPoint(0.0),), (ScheduleSpec(0.1, 0.1, 0.0),)
            ),
            "schedules[0].duration",
        ),
        (
            lambda: ScanPlan(EXPERIMENT1, (ScanPoint(0.0),), calibration_time=0.0),
            "calibration_time",
        ),
        (lambda: default_plan(EXPERIMENT1, 0), "points"),
        (lambda: default_plan("experiment3"), "mode"),
    ],
)
def test_invalid_plan(build, field_path: str) -> None:  # type: ignore[no-untyped-def]
    with pytest.raises(PlanValidationError) as exc_info:
        build()

    assert exc_info.value.field_path == field_path


def test_load_grid_plan() -> None:
    result = load_plan(GRID_PLAN)

    assert result == default_plan(EXPERIMENT1, 12, 30.0)


def test_load_point_plan() -> None:
    result = load_plan(POINTS_PLAN)

    assert result == ScanPlan(
        EXPERIMENT2,
        (ScanPoint(0.0, None, 30.0), ScanPoint(1.5, None, 10.0)),
        chsh_selection=MAX_FITTED_S,
        calibration_time=2.0,
    )


@pytest.mark.parametrize(
    "text, field_path",
    [
        ("schema_version: 1\nmode: experiment1\n", "points"),
        (GRID_PLAN + "points: [{delta_1: 0.0}]\n", "points"),
        (GRID_PLAN + "colour: blue\n", "colour"),
        (GRID_PLAN.replace("schema_version: 1", "schema_version: 2"), "schema_version"),
        (GRID_PLAN.replace("mode: experiment1\n", ""), "mode"),
        (GRID_PLAN.replace("points: 12", "points: 0"), "points"),
        (GRID_PLAN.replace("points: 12", "points: many"), "grid.points"),
        (GRID_PLAN.replace("points: 12", "points: 12, step: 1"), "grid.step"),
        ("schema_version: 1\nmode: experiment1\npoints: 3\n", "points"),
        ("schema_version: 1\nmode: experiment1\npoints: [7]\n", "points[0]"),
        (POINTS_PLAN.replace("delta_1: 1.5", "delta_1: far"), "points[1].delta_1"),
        (POINTS_PLAN + "chsh_selection: 4\n", "chsh_selection"),
        (
            GRID_PLAN
            + "schedules: [{rate_1: 0.1, rate_2: 0.1, duration: 9, bins: 2}]\n",
            "schedules[0].bins",
        ),
        (
            GRID_PLAN + "schedules: [{rate_1: 0.1, duration: 9}]\n",
            "schedules[0].rate_2",
        ),
        ("- 1\n- 2\n", "<document>"),
    ],
)
def test_load_invalid_plan(text: str, field_path: str) -> None:
    with pytest.raises(PlanValidationError) as exc_info:
        load_plan(text)

    assert exc_info.value.field_path == field_path


def test_load_malformed_plan() -> None:
    with pytest.raises(ScenarioParseError):
        load_plan("mode: [experiment1")


@pytest.mark.parametrize(
    "plan",
    [
        default_plan(EXPERIMENT1),
        default_plan(EXPERIMENT2, 7, 2.5),
        ScanPlan(
            EXPERIMENT1,
            (ScanPoint(0.1, 0.2, 3.0), ScanPoint(-1.0, None, 4.0)),
            (ScheduleSpec(0.4, 0.4, 20.0, 40), ScheduleSpec(0.3, -0.3, 10.0, 8, 1.0)),
            MAX_FITTED_S,
            3.0,
        ),
    ],
)
def test_emit_plan_reads_back_unchanged(plan: ScanPlan) -> None:
    result = load_plan(emit_plan(plan))

    assert result == plan


@pytest.mark.parametrize(
    "phase_offset, expect",
    [(0.0, (0, 9, 9, 6)), (-math.pi / 6, (1, 10, 10, 7)), (math.pi / 6, (11, 8, 8, 5))],
)
def test_select_nearest_optimal(
    phase_offset: float, expect: Tuple[int, int, int, int]
) -> None:
    phase_sums = [math.pi / 4 + index * math.pi / 6 for index in range(12)]

    result = select_nearest_optimal(phase_sums, phase_offset)

    assert result == expect


def test_select_max_fitted_s() -> None:
    """Two analyzers a quarter turn apart reach 2√2 on an eighth-turn grid"""
    delta_1 = [index * math.pi / 4 for index in range(8)]
    phase_sums = {"b1": delta_1, "b2": [delta - math.pi / 2 for delta in delta_1]}
    fit = FringeFit(1.0, 0.0, 0.01, 0.01, 1.0, 8)

    terms, predicted = select_max_fitted_s(
        phase_sums, {"b1": fit, "b2": fit}, ["b1", "b2"]
    )

    assert predicted == pytest.approx(TWO_SQRT_2)
    assert sorted(name for name, _ in terms) == ["b1", "b1", "b2", "b2"]
    assert len({index for _, index in terms}) == 2
    values = [fit.predict(phase_sums[name][index]) for name, index in terms]
    assert abs(values[0] + values[1] + values[2] - values[3]) == pytest.approx(
        TWO_SQRT_2
    )


def test_select_max_fitted_s_needs_two_points() -> None:
    fit = FringeFit(1.0, 0.0, 0.01, 0.01, 1.0, 1)

    with pytest.raises(InsufficientSpanError):
        select_max_fitted_s(
            {"b1": [0.0], "b2": [0.0]}, {"b1": fit, "b2": fit}, ["b1", "b2"]
        )


def test_expectations(bright_scenario: ScenarioConfig) -> None:
    result = expectations(bright_scenario)

    assert result["visibility_net"] == 0.9
    assert result["singles:a+"] == pytest.approx(30100.0)
    assert result["true_coincidence_rate:a+/b-"] == pytest.approx(1066.1, rel=1e-3)
    assert result["visibility_raw:b"] == pytest.approx(0.8996, abs=1e-4)
    assert result["S_raw"] == pytest.approx(TWO_SQRT_2 * result["visibility_raw:b"])


def test_experiment1_fringe(bright_report: ExperimentReport) -> None:
    fits = bright_report.fits["b"]
    expect_raw = bright_report.expectations["visibility_raw:b"]

    assert set(fits) == {RAW, NET}
    assert abs(fits[RAW].visibility - expect_raw) < 4 * fits[RAW].sigma_visibility
    assert abs(fits[NET].visibility - 0.9) < 4 * fits[NET].sigma_visibility
    assert abs(fits[RAW].phase_offset) < 4 * fits[RAW].sigma_phase_offset
    assert fits[NET].visibility >= fits[RAW].visibility
    assert fits[RAW].points == 8


def test_experiment1_bell_parameters(bright_report: ExperimentReport) -> None:
    """Every estimate of S agrees with the closed form and violates the bound"""
    expect = {
        RAW: TWO_SQRT_2 * bright_report.expectations["visibility_raw:b"],
        NET: TWO_SQRT_2 * 0.9,
    }

    result = {(bell.mode, bell.variant): bell for bell in bright_report.bell}

    assert set(result) == {
        (mode, variant)
        for mode in (FOUR_POINT, REDUCED, FROM_VISIBILITY)
        for variant in (RAW, NET)
    }
    for (mode, variant), bell in result.items():
        assert abs(bell.S - expect[variant]) < 4 * bell.sigma_S
        assert bell.n_sigma is not None and bell.n_sigma > 3
    assert result[(FOUR_POINT, RAW)].points == (0, 6, 6, 4)
    assert result[(REDUCED, RAW)].points == (0, 2)
    assert result[(FROM_VISIBILITY, RAW)].n_sigma > 8  # type: ignore[operator]


def test_experiment1_checks(
    bright_scenario: ScenarioConfig, bright_report: ExperimentReport
) -> None:
    assert bright_report.mode == EXPERIMENT1
    assert bright_report.seed == 7
    assert bright_report.link_offset.calibrated
    assert bright_report.link_offset.offset == pytest.approx(
        bright_scenario.nominal_link_offset, abs=30e-12
    )
    assert bright_report.qber is not None
    assert bright_report.qber == pytest.approx(0.05, abs=0.03)
    assert bright_report.below_bell_threshold
    assert set(bright_report.singles_consistency) == {"a+", "a-", "b+", "b-"}
    assert all(test.consistent for test in bright_report.singles_consistency.values())
    histogram = bright_report.histogram
    assert histogram.area(0.0, 300e-12) > histogram.area(1.2e-9, 300e-12) > 0
    assert histogram.area(-1.2e-9, 300e-12) > 0


def test_experiment1_accidentals(bright_report: ExperimentReport) -> None:
    """Subtracted accidentals are the pooled displaced-window counts"""
    measured = sum(
        point.curves["b"].measured_accidentals.total for point in bright_report.points
    )

    result = sum(point.curves["b"].accidentals.total for point in bright_report.points)

    assert result == pytest.approx(measured)
    for point in bright_report.points:
        curve = point.curves["b"]
        assert curve.net.net
        assert curve.net.total <= curve.raw.total


def test_experiment_does_not_depend_on_workers(
    bright_scenario: ScenarioConfig,
    bright_plan: ScanPlan,
    bright_report: ExperimentReport,
) -> None:
    result = run_experiment(bright_scenario, bright_plan, workers=2)

    assert report_to_dict(result) == report_to_dict(bright_report)


def test_experiment_depends_on_the_seed(
    bright_scenario: ScenarioConfig,
    bright_plan: ScanPlan,
    bright_report: ExperimentReport,
) -> None:
    plan = replace(bright_plan, points=bright_plan.points[:4])

    result = run_experiment1(replace(bright_scenario, rng_seed=8), plan)

    assert result.identifier != bright_report.identifier
    assert result.points[0].singles != bright_report.points[0].singles


def test_configured_link_offset_skips_calibration(
    bright_scenario: ScenarioConfig, bright_plan: ScanPlan
) -> None:
    offset = bright_scenario.nominal_link_offset
    scenario = replace(
        bright_scenario,
        coincidence=replace(bright_scenario.coincidence, link_offset=offset),
    )
    plan = replace(bright_plan, points=bright_plan.points[::2])

    result = run_experiment1(scenario, plan)

    assert result.link_offset.offset == offset
    assert not result.link_offset.calibrated
    assert result.fits["b"][RAW].visibility > 0.8


def test_experiment2(bright_passive_scenario: ScenarioConfig) -> None:
    plan = replace(default_plan(EXPERIMENT2, 8, 0.5), calibration_time=0.5)

    result = run_experiment2(bright_passive_scenario, plan)

    assert result.curves == ["b1", "b2"]
    expect_raw = result.expectations["visibility_raw:b1"]
    for name in ("b1", "b2"):
        fit = result.fits[name][RAW]
        assert abs(fit.visibility - expect_raw) < 4 * fit.sigma_visibility
    for name in ("b1", "b2"):
        fit = result.fits[name][RAW]
        assert abs(fit.phase_offset) < 4 * fit.sigma_phase_offset
    bell = {(bell.mode, bell.variant): bell for bell in result.bell}
    assert set(bell) == {(FOUR_POINT, RAW), (FOUR_POINT, NET)}
    raw = bell[(FOUR_POINT, RAW)]
    assert abs(raw.S - TWO_SQRT_2 * expect_raw) < 4 * raw.sigma_S
    assert len(raw.points) == 4
    assert len(set(raw.points)) == 2
    assert "visibility_raw_without_coupler" in result.expectations
    assert (
        result.expectations["visibility_raw_without_coupler"]
        >= result.expectations["visibility_raw:b1"]
    )


def _single_channel(scenario: ScenarioConfig) -> ScenarioConfig:
    assert isinstance(scenario.analyzer_b, InterferometerParams)
    detectors = dict(scenario.detectors)
    del detectors["b-"]
    return replace(
        scenario,
        analyzer_b=replace(scenario.analyzer_b, two_channel=False),
        detectors=detectors,
    )


@pytest.mark.parametrize(
    "runner, mode, passive, exception",
    [
        (run_experiment1, EXPERIMENT1, True, TopologyError),
        (run_experiment2, EXPERIMENT2, False, TopologyError),
        (run_experiment1, EXPERIMENT2, False, PlanValidationError),
        (run_experiment2, EXPERIMENT1, True, PlanValidationError),
    ],
)
def test_experiment_topology(  # type: ignore[no-untyped-def]
    bright_scenario: ScenarioConfig,
    bright_passive_scenario: ScenarioConfig,
    runner,
    mode: str,
    passive: bool,
    exception: type,
) -> None:
    scenario = bright_passive_scenario if passive else bright_scenario

    with pytest.raises(exception):
        runner(scenario, default_plan(mode, 4, 0.1))


def test_experiment1_needs_two_channels(bright_scenario: ScenarioConfig) -> None:
    with pytest.raises(TopologyError):
        run_experiment1(
            _single_channel(bright_scenario), default_plan(EXPERIMENT1, 4, 0.1)
        )


@pytest.mark.parametrize(
    "rate_1, rate_2, expect_flat",
    [(0.4, 0.4, False), (0.6, 0.0, False), (0.4, -0.4, True), (0.0, 0.0, True)],
)
def test_check_schedule(
    bright_scenario: ScenarioConfig, rate_1: float, rate_2: float, expect_flat: bool
) -> None:
    """The coincidence fringe oscillates at the sum of the phase ramp rates"""
    spec = ScheduleSpec(rate_1, rate_2, 20.0, bins=40)
    seed = np.random.SeedSequence(bright_scenario.rng_seed, spawn_key=(2, 0))

    result = check_schedule(
        bright_scenario, spec, seed, bright_scenario.nominal_link_offset
    )

    assert result.passed
    assert result.expected_rate == pytest.approx(abs(rate_1 + rate_2))
    assert len(result.times) == len(result.E) == len(result.sigma_E) == 40
    if expect_flat:
        assert result.measured_rate is None
        assert result.flat_p_value is not None
        assert all(E > 0.8 for E in result.E)
    else:
        assert result.measured_rate == pytest.approx(
            abs(rate_1 + rate_2), abs=spec.resolution
        )


def test_check_schedule_without_coincidences(bright_scenario: ScenarioConfig) -> None:
    """A ramp with blind side-b detectors is reported as not checked"""
    blind = DetectorParams(efficiency=0.0, dark_rate=0.0)
    scenario = replace(
        bright_scenario,
        detectors={**bright_scenario.detectors, "b+": blind, "b-": blind},
    )
    spec = ScheduleSpec(0.4, 0.4, 5.0, bins=8)
    seed = np.random.SeedSequence(scenario.rng_seed, spawn_key=(2, 0))

    result = check_schedule(scenario, spec, seed, scenario.nominal_link_offset)

    assert result.passed is None
    assert result.measured_rate is None
    assert result.flat_p_value is None
    assert result.E == ()


def _point_counts(report: ExperimentReport) -> List[PointCounts]:
    return [
        PointCounts(
            index=record.index,
            phases=record.phases,
            integration_time=record.integration_time,
            singles=record.singles,
            raw={name: curve.raw for name, curve in record.curves.items()},
            accidentals={
                name: curve.measured_accidentals
                for name, curve in record.curves.items()
            },
        )
        for record in report.points
    ]


def test_assemble_report_with_an_empty_point(
    bright_scenario: ScenarioConfig,
    bright_plan: ScanPlan,
    bright_report: ExperimentReport,
) -> None:
    """A scan point without coincidences is left out of the fits"""
    counts = _point_counts(bright_report)
    empty = counts[3].raw["b"].with_counts([0, 0, 0, 0], net=False)
    counts[3] = replace(counts[3], raw={"b": empty})

    result = assemble_report(
        bright_scenario,
        bright_plan,
        counts,
        bright_report.link_offset,
        bright_report.histogram,
    )

    curve = result.points[3].curves["b"]
    assert curve.E_raw is None
    assert curve.E_net is None
    assert result.fits["b"][RAW].points == len(bright_plan.points) - 1
    assert result.fits["b"][NET].points == len(bright_plan.points) - 1
    bell = {(bell.mode, bell.variant): bell for bell in result.bell}
    assert (FOUR_POINT, RAW) in bell
    assert (FROM_VISIBILITY, NET) in bell
    assert all(3 not in bell.points for bell in result.bell)


def test_analyze_dump(
    bright_scenario: ScenarioConfig, bright_plan: ScanPlan, tmp_path: Path
) -> None:
    """Recounting dumped tags reproduces the run; a narrower window loses pairs"""
    plan = replace(bright_plan, points=bright_plan.points[::2])
    report = run_experiment1(bright_scenario, plan, dump_directory=tmp_path)

    result = analyze_dump(report, tmp_path)
    narrow = analyze_dump(report, tmp_path, 200e-12)

    assert sorted(path.name for path in tmp_path.iterdir()) == [
        dump_name(index) for index in range(4)
    ]
    for point, expect in zip(result.points, report.points):
        for count, expect_count in zip(
            point.curves["b"].raw.counts, expect.curves["b"].raw.counts
        ):
            assert count == pytest.approx(expect_count, abs=2)
    assert result.fits["b"][RAW].visibility == pytest.approx(
        report.fits["b"][RAW].visibility, abs=1e-3
    )
    for point, expect in zip(narrow.points, report.points):
        assert point.curves["b"].raw.total < expect.curves["b"].raw.total
    assert narrow.identifier != report.identifier
    assert narrow.schedules == report.schedules



@pytest.mark.slow
@pytest.mark.parametrize(
    "variant, low, high", [(RAW, 0.823, 0.883), (NET, 0.925, 0.985)]
)
def test_preset_experiment1_visibility(variant: str, low: float, high: float) -> None:
    """A 12-point scan at 30 s per point lands in the measured visibility range"""
    from franson_bell.presets import calibrate_preset

    result = run_experiment1(calibrate_preset(), default_plan(EXPERIMENT1), workers=4)

    assert low <= result.fits["b"][variant].visibility <= high


@pytest.mark.slow
@pytest.mark.parametrize("points", [12])
def test_preset_experiment1(points: int) -> None:
    """The calibrated preset violates the Bell inequality in raw and net counts"""
    from franson_bell.presets import calibrate_preset

    scenario = calibrate_preset()
    plan = default_plan(EXPERIMENT1, points)

    result = run_experiment1(scenario, plan, workers=4)

    expect_raw = result.expectations["visibility_raw:b"]
    fits = result.fits["b"]
    visibility = result.expectations["visibility_net"]
    assert abs(fits[RAW].visibility - expect_raw) < 4 * fits[RAW].sigma_visibility
    assert abs(fits[NET].visibility - visibility) < 4 * fits[NET].sigma_visibility
    bell = {(bell.mode, bell.variant): bell for bell in result.bell}
    for variant, expect in ((RAW, expect_raw), (NET, visibility)):
        four_point = bell[(FOUR_POINT, variant)]
        assert abs(four_point.S - TWO_SQRT_2 * expect) < 3 * four_point.sigma_S
    assert bell[(FROM_VISIBILITY, RAW)].n_sigma > 8  # type: ignore[operator]
    assert bell[(FOUR_POINT, RAW)].S > 2


@pytest.mark.slow
@pytest.mark.parametrize("variant", [RAW, NET])
def test_preset_experiment1_long_integration(variant: str) -> None:
    """Four times the integration time pushes the violation past 14 sigma"""
    from franson_bell.presets import calibrate_preset

    plan = default_plan(EXPERIMENT1, 12, 120.0)

    result = run_experiment1(calibrate_preset(), plan, workers=4)

    bell = {(bell.mode, bell.variant): bell for bell in result.bell}
    assert bell[(FROM_VISIBILITY, variant)].n_sigma >= 14  # type: ignore[operator]


@pytest.mark.slow
def test_preset_experiment1_net_visibility_over_seeds() -> None:
    """Subtracting accidentals recovers the source visibility for every seed"""
    from franson_bell.presets import calibrate_preset

    scenario = calibrate_preset()
    plan = default_plan(EXPERIMENT1, 12, 10.0)

    fits: List[FringeFit] = []
    for seed in range(10):
        report = run_experiment1(replace(scenario, rng_seed=seed), plan, workers=4)
        fits.append(report.fits["b"][NET])

    visibility = scenario.source.intrinsic_visibility
    for fit in fits:
        assert abs(fit.visibility - visibility) < 4 * fit.sigma_visibility
    mean = sum(fit.visibility for fit in fits) / len(fits)
    sigma_mean = math.sqrt(sum(fit.sigma_visibility**2 for fit in fits)) / len(fits)
    assert abs(mean - visibility) < 3 * sigma_mean


@pytest.mark.slow
def test_preset_experiment2() -> None:
    """With a passive choice on side b the raw fringe is weaker but still violates"""
    from franson_bell.presets import geneva1998_exp2

    scenario = geneva1998_exp2()

    result = run_experiment2(scenario, default_plan(EXPERIMENT2), workers=4)

    expect_raw = result.expectations["visibility_raw:b1"]
    visibility = result.expectations["visibility_net"]
    assert expect_raw < result.expectations["visibility_raw_without_coupler"]
    for name in ("b1", "b2"):
        fits = result.fits[name]
        assert abs(fits[RAW].visibility - expect_raw) < 4 * fits[RAW].sigma_visibility
        assert abs(fits[NET].visibility - visibility) < 4 * fits[NET].sigma_visibility
    bell = {(bell.mode, bell.variant): bell for bell in result.bell}
    for variant, expect in ((RAW, expect_raw), (NET, visibility)):
        four_point = bell[(FOUR_POINT, variant)]
        assert abs(four_point.S - TWO_SQRT_2 * expect) < 4 * four_point.sigma_S
    assert bell[(FOUR_POINT, NET)].S > 2
