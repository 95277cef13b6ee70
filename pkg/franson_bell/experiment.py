"""Phase scans of the two Franson experiments and their statistics

A run first takes a short calibration acquisition to locate the central
coincidence peak, then simulates every scan point with its own random stream,
counts coincidences in the peak window and in a displaced window, and finally
fits fringes and evaluates Bell parameters on the collected counts.

Random streams are derived from the scenario seed with fixed spawn keys: ``(0,)``
for the calibration acquisition, ``(1, k)`` for scan point ``k`` and ``(2, k)``
for phase ramp ``k``. Results do not depend on the number of worker processes.

"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from io import StringIO
from pathlib import Path
from typing import Dict, List, NotRequired, Optional, Sequence, Tuple, TypedDict, Union

import numpy as np
import ruamel.yaml
from scipy.signal import lombscargle
from scipy.stats import chi2

from franson_bell.bell import (
    CONSISTENCY_P_VALUE,
    NET,
    RAW,
    BellResult,
    CorrelationPoint,
    EmptyCountsError,
    FringeFit,
    InsufficientSpanError,
    PhaseRatioError,
    SingularDesignError,
    TWO_SQRT_2,
    chsh,
    correlate,
    correlate_net,
    fit_fringe,
    from_visibility,
    pool_accidentals,
    pool_variances,
    qber,
    reduced_S,
    singles_consistency,
    subtract_accidentals,
    violates_bell,
)
from franson_bell.coincidence import (
    DiffHistogram,
    LinkOffsetCalibration,
    RatePair,
    RateQuad,
    build_histogram,
    calibrate_link_offset,
    count_coincidences,
    count_rate_pair,
    match_coincidences,
    measure_accidentals,
    measure_accidentals_pair,
    merge_streams,
)
from franson_bell.montecarlo import (
    DEFAULT_MAX_EXPECTED_TAGS,
    TimeTagStream,
    dump_streams,
    expected_rates,
    read_streams,
    run_scenario,
)
from franson_bell.report import (
    CurvePoint,
    ExperimentReport,
    PointRecord,
    ScheduleCheck,
    calculate_identifier,
)
from franson_bell.scenario import (
    DEFAULT_INTEGRATION_TIME,
    PORT_SIGNS,
    SCHEMA_VERSION,
    InterferometerParams,
    Node,
    PassiveChoice,
    PhaseSchedule,
    ScenarioConfig,
    ScenarioParseError,
    ScenarioValidationError,
    as_mapping,
    check_keys,
    document_to_scenario,
    read_integer,
    read_number,
    scenario_to_document,
    yaml,
)

logger = logging.getLogger(__name__)

EXPERIMENT1 = "experiment1"
EXPERIMENT2 = "experiment2"
MODES = (EXPERIMENT1, EXPERIMENT2)
NEAREST_OPTIMAL_GRID = "nearest-optimal-grid"
MAX_FITTED_S = "max-fitted-S"
DEFAULT_SELECTION = {EXPERIMENT1: NEAREST_OPTIMAL_GRID, EXPERIMENT2: MAX_FITTED_S}
DEFAULT_POINTS = 12
DEFAULT_CALIBRATION_TIME = 10.0
DEFAULT_SCHEDULE_BINS = 24
MIN_SCHEDULE_BINS = 4
HISTOGRAM_BIN_WIDTH = 50e-12

CALIBRATION_STREAM = 0
POINT_STREAM = 1
SCHEDULE_STREAM = 2

Counts = Union[RateQuad, RatePair]


class PlanValidationError(ScenarioValidationError):
    """Raised when a scan plan is malformed or does not fit the experiment"""


class TopologyError(ValueError):
    """Raised when the scenario's analyzers do not match the experiment"""


@dataclass(frozen=True)
class ScanPoint:
    """One phase setting

    :param delta_2: Phase of analyzer b, or ``None`` to keep the scenario's side-b
                    phases (always the case with a passive choice)

    """

    delta_1: float
    delta_2: Optional[float] = None
    integration_time: float = DEFAULT_INTEGRATION_TIME


@dataclass(frozen=True)
class ScheduleSpec:
    """A continuous acquisition with both analyzer phases ramping linearly"""

    rate_1: float
    rate_2: float
    duration: float
    bins: int = DEFAULT_SCHEDULE_BINS
    start_1: float = 0.0
    start_2: float = 0.0

    @property
    def expected_rate(self) -> float:
        """Angular frequency of the coincidence fringe, ``|v₁ + v₂|``"""
        return abs(self.rate_1 + self.rate_2)

    @property
    def resolution(self) -> float:
        return 2 * math.pi / self.duration

    @property
    def nyquist_rate(self) -> float:
        return math.pi * self.bins / self.duration


@dataclass(frozen=True)
class ScanPlan:
    """Phase settings of a run and how to pick CHSH points from them"""

    mode: str
    points: Tuple[ScanPoint, ...]
    schedules: Tuple[ScheduleSpec, ...] = ()
    chsh_selection: str = NEAREST_OPTIMAL_GRID
    calibration_time: float = DEFAULT_CALIBRATION_TIME

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise PlanValidationError("mode", f"must be one of {', '.join(MODES)}")
        if self.chsh_selection not in (NEAREST_OPTIMAL_GRID, MAX_FITTED_S):
            raise PlanValidationError(
                "chsh_selection", f"unknown rule {self.chsh_selection!r}"
            )
        if not self.points:
            raise PlanValidationError("points", "a plan needs at least one point")
        for index, point in enumerate(self.points):
            path = f"points[{index}]"
            if not point.integration_time > 0:
                raise PlanValidationError(
                    f"{path}.integration_time", "must be positive"
                )
            if not math.isfinite(point.delta_1):
                raise PlanValidationError(f"{path}.delta_1", "must be finite")
            if point.delta_2 is not None:
                if self.mode == EXPERIMENT2:
                    raise PlanValidationError(
                        f"{path}.delta_2", "side-b phases are fixed in a passive choice"
                    )
                if not math.isfinite(point.delta_2):
                    raise PlanValidationError(f"{path}.delta_2", "must be finite")
        if self.schedules and self.mode == EXPERIMENT2:
            raise PlanValidationError(
                "schedules", "phase ramps need a single side-b analyzer"
            )
        for index, schedule in enumerate(self.schedules):
            path = f"schedules[{index}]"
            if not schedule.duration > 0:
                raise PlanValidationError(f"{path}.duration", "must be positive")
            if schedule.bins < 4:
                raise PlanValidationError(f"{path}.bins", "needs at least four bins")
            if schedule.expected_rate >= schedule.nyquist_rate:
                raise PlanValidationError(
                    f"{path}.bins", "too few bins to resolve the fringe of these ramps"
                )
        if not self.calibration_time > 0:
            raise PlanValidationError("calibration_time", "must be positive")


def default_plan(
    mode: str,
    points: int = DEFAULT_POINTS,
    integration_time: float = DEFAULT_INTEGRATION_TIME,
) -> ScanPlan:
    """A full-fringe scan with phase sums ``π/4 + 2πk/n``

    In experiment 1 both analyzers move, analyzer a twice as fast as analyzer b.
    In experiment 2 only analyzer a moves, through the same phase sums.

    :param mode: ``experiment1`` or ``experiment2``
    :param points: Number of scan points
    :param integration_time: Acquisition time per point in seconds
    :return: The plan with the mode's default CHSH selection rule

    """
    if points < 1:
        raise PlanValidationError("points", "a plan needs at least one point")
    steps = [2 * math.pi * index / points for index in range(points)]
    if mode == EXPERIMENT1:
        scan = tuple(
            ScanPoint(math.pi / 4 + 2 * step / 3, step / 3, integration_time)
            for step in steps
        )
    else:
        scan = tuple(
            ScanPoint(math.pi / 4 + step, None, integration_time) for step in steps
        )
    if mode not in DEFAULT_SELECTION:
        raise PlanValidationError("mode", f"must be one of {', '.join(MODES)}")
    return ScanPlan(mode, scan, chsh_selection=DEFAULT_SELECTION[mode])


class PointDocument(TypedDict):
    """One scan point in the plan YAML format"""

    delta_1: float
    delta_2: NotRequired[Optional[float]]
    integration_time: NotRequired[float]


class GridDocument(TypedDict):
    """A default scan grid in the plan YAML format"""

    points: int
    integration_time: NotRequired[float]


class ScheduleSpecDocument(TypedDict):
    """A phase ramp acquisition in the plan YAML format"""

    rate_1: float
    rate_2: float
    duration: float
    bins: NotRequired[int]
    start_1: NotRequired[float]
    start_2: NotRequired[float]


class PlanDocument(TypedDict):
    """A scan plan in the YAML format

    Either ``grid`` or ``points`` must be given::

        schema_version: 1
        mode: experiment1
        chsh_selection: nearest-optimal-grid
        calibration_time: 10.0
        grid: {points: 12, integration_time: 30.0}
        schedules:
          - {rate_1: 0.5, rate_2: 0.5, duration: 60.0, bins: 24}

    """

    schema_version: int
    mode: str
    chsh_selection: NotRequired[str]
    calibration_time: NotRequired[float]
    grid: NotRequired[GridDocument]
    points: NotRequired[List[PointDocument]]
    schedules: NotRequired[List[ScheduleSpecDocument]]


def _plan_points(root: Node, mode: str) -> Tuple[ScanPoint, ...]:
    if ("grid" in root) == ("points" in root):
        raise PlanValidationError("points", "give either grid or points")
    if "grid" in root:
        grid = as_mapping(root["grid"], "grid")
        check_keys(grid, ("points", "integration_time"), "grid")
        return default_plan(
            mode,
            read_integer(grid, "points", "grid"),
            read_number(grid, "integration_time", "grid", DEFAULT_INTEGRATION_TIME),
        ).points
    entries = root["points"]
    if not isinstance(entries, list):
        raise PlanValidationError("points", "must be a list")
    points = []
    for index, entry in enumerate(entries):
        path = f"points[{index}]"
        node = as_mapping(entry, path)
        check_keys(node, ("delta_1", "delta_2", "integration_time"), path)
        points.append(
            ScanPoint(
                delta_1=read_number(node, "delta_1", path),
                delta_2=(
                    None
                    if node.get("delta_2") is None
                    else read_number(node, "delta_2", path)
                ),
                integration_time=read_number(
                    node, "integration_time", path, DEFAULT_INTEGRATION_TIME
                ),
            )
        )
    return tuple(points)


def _plan_schedules(root: Node) -> Tuple[ScheduleSpec, ...]:
    entries = root.get("schedules", [])
    if not isinstance(entries, list):
        raise PlanValidationError("schedules", "must be a list")
    schedules = []
    for index, entry in enumerate(entries):
        path = f"schedules[{index}]"
        node = as_mapping(entry, path)
        check_keys(
            node,
            ("rate_1", "rate_2", "duration", "bins", "start_1", "start_2"),
            path,
        )
        schedules.append(
            ScheduleSpec(
                rate_1=read_number(node, "rate_1", path),
                rate_2=read_number(node, "rate_2", path),
                duration=read_number(node, "duration", path),
                bins=read_integer(node, "bins", path, DEFAULT_SCHEDULE_BINS),
                start_1=read_number(node, "start_1", path, 0.0),
                start_2=read_number(node, "start_2", path, 0.0),
            )
        )
    return tuple(schedules)


def document_to_plan(document: object) -> ScanPlan:
    """Validate a parsed plan document and convert it to a plan

    :raises PlanValidationError: If the document is malformed

    """
    try:
        root = as_mapping(document, "<document>")
        check_keys(
            root,
            (
                "schema_version",
                "mode",
                "chsh_selection",
                "calibration_time",
                "grid",
                "points",
                "schedules",
            ),
            "",
        )
        if read_integer(root, "schema_version", "") != SCHEMA_VERSION:
            raise PlanValidationError("schema_version", f"expected {SCHEMA_VERSION}")
        mode = root.get("mode")
        if mode not in MODES:
            raise PlanValidationError("mode", f"must be one of {', '.join(MODES)}")
        assert isinstance(mode, str)
        selection = root.get("chsh_selection", DEFAULT_SELECTION[mode])
        if not isinstance(selection, str):
            raise PlanValidationError("chsh_selection", "must be a string")
        return ScanPlan(
            mode=mode,
            points=_plan_points(root, mode),
            schedules=_plan_schedules(root),
            chsh_selection=selection,
            calibration_time=read_number(
                root, "calibration_time", "", DEFAULT_CALIBRATION_TIME
            ),
        )
    except PlanValidationError:
        raise
    except ScenarioValidationError as exc_info:
        raise PlanValidationError(exc_info.field_path, exc_info.message) from exc_info


def plan_to_document(plan: ScanPlan) -> PlanDocument:
    """Convert a plan to the YAML document format with every point spelled out"""
    return PlanDocument(
        schema_version=SCHEMA_VERSION,
        mode=plan.mode,
        chsh_selection=plan.chsh_selection,
        calibration_time=plan.calibration_time,
        points=[
            PointDocument(
                delta_1=point.delta_1,
                delta_2=point.delta_2,
                integration_time=point.integration_time,
            )
            for point in plan.points
        ],
        schedules=[
            ScheduleSpecDocument(
                rate_1=schedule.rate_1,
                rate_2=schedule.rate_2,
                duration=schedule.duration,
                bins=schedule.bins,
                start_1=schedule.start_1,
                start_2=schedule.start_2,
            )
            for schedule in plan.schedules
        ],
    )


def load_plan(text: str) -> ScanPlan:
    """Parse and validate a plan YAML document

    :raises ScenarioParseError: If the text is not valid YAML
    :raises PlanValidationError: If the document is malformed

    """
    try:
        document: object = yaml.load(text)
    except ruamel.yaml.YAMLError as exc_info:
        raise ScenarioParseError(f"Malformed plan document: {exc_info}") from exc_info
    return document_to_plan(document)


def read_plan(path: Path) -> ScanPlan:
    with path.open(encoding="utf-8") as plan_file:
        return load_plan(plan_file.read())


def emit_plan(plan: ScanPlan) -> str:
    buffer = StringIO()
    yaml.dump(plan_to_document(plan), buffer)
    return buffer.getvalue()


def curve_names(scenario: ScenarioConfig) -> List[str]:
    """Side-b analyzers, each giving one correlation curve"""
    return [name for name in scenario.analyzers if name != "a"]


def point_phases(scenario: ScenarioConfig, point: ScanPoint) -> Dict[str, float]:
    phases = {name: analyzer.phase for name, analyzer in scenario.analyzers.items()}
    phases["a"] = point.delta_1
    if point.delta_2 is not None:
        phases["b"] = point.delta_2
    return phases


def _fixed(analyzer: InterferometerParams, phase: float) -> InterferometerParams:
    return replace(analyzer, phase=phase, phase_schedule=None)


def with_phases(
    scenario: ScenarioConfig, phases: Dict[str, float], integration_time: float
) -> ScenarioConfig:
    """The scenario with fixed analyzer phases and a new integration time"""
    analyzer_b: Union[InterferometerParams, PassiveChoice]
    if isinstance(scenario.analyzer_b, PassiveChoice):
        analyzer_b = replace(
            scenario.analyzer_b,
            b1=_fixed(scenario.analyzer_b.b1, phases["b1"]),
            b2=_fixed(scenario.analyzer_b.b2, phases["b2"]),
        )
    else:
        analyzer_b = _fixed(scenario.analyzer_b, phases["b"])
    return replace(
        scenario,
        analyzer_a=_fixed(scenario.analyzer_a, phases["a"]),
        analyzer_b=analyzer_b,
        coincidence=replace(scenario.coincidence, integration_time=integration_time),
    )


@dataclass(frozen=True)
class PointCounts:
    """Raw counts of one scan point, before any statistics"""

    index: int
    phases: Dict[str, float]
    integration_time: float
    singles: Dict[str, int]
    raw: Dict[str, Counts]
    accidentals: Dict[str, Counts]


def count_point(
    index: int,
    scenario: ScenarioConfig,
    streams: Dict[str, TimeTagStream],
    link_offset: float,
) -> PointCounts:
    """Count peak and displaced-window coincidences of every side-b analyzer

    :param index: Scan point index
    :param scenario: The scenario with the point's phases
    :param streams: Time tags of every detector
    :param link_offset: Calibrated arrival-time difference of the fibers
    :return: The counts

    """
    coincidence = scenario.coincidence
    streams_a = (streams["a+"], streams["a-"])
    raw: Dict[str, Counts] = {}
    accidentals: Dict[str, Counts] = {}
    for name in curve_names(scenario):
        if scenario.analyzers[name].two_channel:
            streams_b = (streams[f"{name}+"], streams[f"{name}-"])
            raw[name] = count_coincidences(
                streams_a, streams_b, coincidence.window, 0.0, link_offset
            )
            accidentals[name] = measure_accidentals(
                streams_a,
                streams_b,
                coincidence.window,
                coincidence.accidental_offset,
                scenario.arm_imbalance_delay,
                link_offset,
            )
        else:
            raw[name] = count_rate_pair(
                streams_a, streams[f"{name}+"], coincidence.window, 0.0, link_offset
            )
            accidentals[name] = measure_accidentals_pair(
                streams_a,
                streams[f"{name}+"],
                coincidence.window,
                coincidence.accidental_offset,
                scenario.arm_imbalance_delay,
                link_offset,
            )
    phases = {name: analyzer.phase for name, analyzer in scenario.analyzers.items()}
    logger.info(
        "Point %d: %s, coincidences %s",
        index,
        ", ".join(f"{name}={phase:.3f}" for name, phase in phases.items()),
        ", ".join(f"{name}={counts.total:.0f}" for name, counts in raw.items()),
    )
    return PointCounts(
        index=index,
        phases=phases,
        integration_time=coincidence.integration_time,
        singles={detector: len(stream) for detector, stream in streams.items()},
        raw=raw,
        accidentals=accidentals,
    )


@dataclass(frozen=True)
class PointTask:
    """Everything a worker needs to simulate and count one scan point"""

    index: int
    scenario: ScenarioConfig
    seed: np.random.SeedSequence
    link_offset: float
    max_expected_tags: float
    dump_path: Optional[Path] = None


def measure_point(task: PointTask) -> PointCounts:
    """Simulate one scan point and count its coincidences"""
    streams = run_scenario(task.scenario, task.seed, task.max_expected_tags)
    if task.dump_path is not None:
        dump_streams(streams, task.dump_path)
    return count_point(task.index, task.scenario, streams, task.link_offset)


def dump_name(index: int) -> str:
    return f"tags-{index:03d}.npz"


def _circular_distance(angle: float, target: float) -> float:
    return abs(math.remainder(angle - target, 2 * math.pi))


def select_nearest_optimal(
    phase_sums: Sequence[float], phase_offset: float
) -> Tuple[int, int, int, int]:
    """Points closest to the optimal CHSH settings of a single fringe

    The targets for ``Δ + φ₀`` are π/4, -π/4, -π/4 and -3π/4 for the four CHSH
    terms in order, so the two middle terms share one point.

    :return: Indices into ``phase_sums`` for the four terms

    """
    targets = (math.pi / 4, -math.pi / 4, -math.pi / 4, -3 * math.pi / 4)
    picks = [
        min(
            range(len(phase_sums)),
            key=lambda index, target=target: _circular_distance(
                phase_sums[index] + phase_offset, target
            ),
        )
        for target in targets
    ]
    return (picks[0], picks[1], picks[2], picks[3])


Term = Tuple[str, int]


def select_max_fitted_s(
    phase_sums: Dict[str, Sequence[float]],
    fits: Dict[str, FringeFit],
    curves: Sequence[str],
) -> Tuple[Tuple[Term, Term, Term, Term], float]:
    """The two scan points and CHSH sign pattern maximizing S on the fitted curves

    Scan point ``k`` supplies ``d₁`` and point ``l`` supplies ``d₁′``; the two
    side-b analyzers supply ``d₂`` and ``d₂′``. Ties keep the first candidate in
    index order.

    :param phase_sums: Phase sum of every scan point per curve
    :param fits: Fitted fringe per curve
    :param curves: The two side-b analyzer names
    :return: The four terms as (curve, point index) with the negative term last,
             and the predicted S

    """
    first, second = curves
    count = len(phase_sums[first])
    best: Optional[Tuple[float, Tuple[Term, Term, Term, Term]]] = None
    for k in range(count):
        for l in range(count):
            if k == l:
                continue
            terms = [(first, k), (second, k), (first, l), (second, l)]
            values = [
                fits[name].predict(phase_sums[name][index]) for name, index in terms
            ]
            for negative in range(4):
                predicted = abs(math.fsum(values) - 2 * values[negative])
                if best is None or predicted > best[0]:
                    ordered = [
                        term
                        for position, term in enumerate(terms)
                        if position != negative
                    ]
                    best = (
                        predicted,
                        (ordered[0], ordered[1], ordered[2], terms[negative]),
                    )
    if best is None:
        raise InsufficientSpanError("Four-point CHSH needs two distinct scan points")
    return best[1], best[0]


def _fit_or_none(points: Sequence[CorrelationPoint], label: str) -> Optional[FringeFit]:
    try:
        fit = fit_fringe(points)
    except (InsufficientSpanError, SingularDesignError) as exc_info:
        logger.warning("No %s fringe fit: %s", label, exc_info)
        return None
    logger.info(
        "%s fringe: V = %.4f ± %.4f, φ₀ = %.3f",
        label,
        fit.visibility,
        fit.sigma_visibility,
        fit.phase_offset,
    )
    return fit


def _phase_sum(record: PointRecord, name: str) -> float:
    return record.phases["a"] + record.phases[name]


def _bell_experiment1(
    records: Sequence[PointRecord], fits: Dict[str, Dict[str, FringeFit]]
) -> List[BellResult]:
    results: List[BellResult] = []
    raw_points = [record.curves["b"].E_raw for record in records]
    net_points = [record.curves["b"].E_net for record in records]
    curve_fits = fits.get("b", {})
    if RAW not in curve_fits:
        logger.warning("Skipping Bell parameters without a raw fringe fit")
        return results
    phase_sums = [_phase_sum(record, "b") for record in records]

    picks = select_nearest_optimal(phase_sums, curve_fits[RAW].phase_offset)
    indices = tuple(records[pick].index for pick in picks)
    for points in (raw_points, net_points):
        chosen = [points[pick] for pick in picks]
        if all(point is not None for point in chosen):
            E11, E12, E21, E22 = (point for point in chosen if point is not None)
            results.append(chsh(E11, E12, E21, E22, indices))
        else:
            logger.warning("Skipping CHSH: a chosen point has no coincidences left")

    first = min(
        range(len(phase_sums)),
        key=lambda index: _circular_distance(phase_sums[index], math.pi / 4),
    )
    partners = [
        index
        for index in range(len(phase_sums))
        if _circular_distance(phase_sums[index], 3 * phase_sums[first]) < 1e-6
    ]
    if partners:
        for points in (raw_points, net_points):
            E_delta, E_3delta = points[first], points[partners[0]]
            if E_delta is None or E_3delta is None:
                continue
            try:
                results.append(
                    reduced_S(
                        E_delta,
                        E_3delta,
                        (records[first].index, records[partners[0]].index),
                    )
                )
            except PhaseRatioError as exc_info:
                logger.warning("Skipping reduced Bell parameter: %s", exc_info)
    else:
        logger.warning(
            "Skipping reduced Bell parameter: no scan point at three times Δ = %.3f",
            phase_sums[first],
        )

    for variant, fit in curve_fits.items():
        results.append(from_visibility(fit, variant))
    return results


def _bell_experiment2(
    records: Sequence[PointRecord],
    fits: Dict[str, Dict[str, FringeFit]],
    curves: List[str],
) -> List[BellResult]:
    if any(RAW not in fits.get(name, {}) for name in curves):
        logger.warning("Skipping Bell parameters without raw fits of both curves")
        return []
    phase_sums = {
        name: [_phase_sum(record, name) for record in records] for name in curves
    }
    terms, predicted = select_max_fitted_s(
        phase_sums, {name: fits[name][RAW] for name in curves}, curves
    )
    logger.info("CHSH terms %s, S predicted from the fits %.3f", terms, predicted)
    indices = tuple(records[index].index for _, index in terms)
    results = []
    for variant in (RAW, NET):
        chosen = []
        for name, index in terms:
            curve = records[index].curves[name]
            chosen.append(curve.E_raw if variant == RAW else curve.E_net)
        if all(point is not None for point in chosen):
            E11, E12, E21, E22 = (point for point in chosen if point is not None)
            results.append(chsh(E11, E12, E21, E22, indices))
        else:
            logger.warning(
                "Skipping %s CHSH: a chosen point has no coincidences left", variant
            )
    return results


def _without_coupler(scenario: ScenarioConfig) -> ScenarioConfig:
    """The experiment-1 counterpart of a passive-choice scenario"""
    assert isinstance(scenario.analyzer_b, PassiveChoice)
    detector = scenario.detectors["b1+"]
    return replace(
        scenario,
        analyzer_b=replace(scenario.analyzer_b.b1, two_channel=True),
        detectors={
            "a+": scenario.detectors["a+"],
            "a-": scenario.detectors["a-"],
            "b+": detector,
            "b-": detector,
        },
    )


def expectations(scenario: ScenarioConfig) -> Dict[str, float]:
    """Closed-form values to compare a run against"""
    rates = expected_rates(scenario)
    result = {"visibility_net": rates.visibility}
    for name in curve_names(scenario):
        result[f"visibility_raw:{name}"] = rates.raw_visibility(name)
    if isinstance(scenario.analyzer_b, PassiveChoice):
        result["visibility_raw_without_coupler"] = expected_rates(
            _without_coupler(scenario)
        ).raw_visibility("b")
    else:
        result["S_raw"] = TWO_SQRT_2 * rates.raw_visibility("b")
        result["S_net"] = TWO_SQRT_2 * rates.visibility
    for detector, rate in rates.singles.items():
        result[f"singles:{detector}"] = rate
    for (detector_a, detector_b), rate in rates.true_coincidences.items():
        result[f"true_coincidence_rate:{detector_a}/{detector_b}"] = rate
    for (detector_a, detector_b), rate in rates.accidentals.items():
        result[f"accidental_rate:{detector_a}/{detector_b}"] = rate
    return result


def assemble_report(
    scenario: ScenarioConfig,
    plan: ScanPlan,
    counts: Sequence[PointCounts],
    link_offset: LinkOffsetCalibration,
    histogram: DiffHistogram,
    schedules: Sequence[ScheduleCheck] = (),
) -> ExperimentReport:
    """Turn the counts of all scan points into fits, Bell parameters and checks

    Accidentals are pooled over all points per port pair and scaled to each
    point's integration time before subtraction.

    """
    curves = curve_names(scenario)
    records = []
    for point in counts:
        curve_points = {}
        for name in curves:
            raw = point.raw[name]
            measured = [other.accidentals[name] for other in counts]
            expected = pool_accidentals(measured, raw.integration_time)
            net = subtract_accidentals(raw, expected)
            delta_1, delta_2 = point.phases["a"], point.phases[name]
            try:
                E_raw: Optional[CorrelationPoint] = correlate(raw, delta_1, delta_2)
            except EmptyCountsError:
                logger.warning(
                    "Scan point %d has no %s coincidences, leaving it out",
                    point.index,
                    name,
                )
                E_raw = None
            try:
                E_net: Optional[CorrelationPoint] = correlate_net(
                    raw,
                    expected,
                    pool_variances(measured, raw.integration_time),
                    delta_1,
                    delta_2,
                )
            except EmptyCountsError:
                E_net = None
            curve_points[name] = CurvePoint(
                raw=raw,
                measured_accidentals=point.accidentals[name],
                accidentals=expected,
                net=net,
                E_raw=E_raw,
                E_net=E_net,
            )
        records.append(
            PointRecord(
                index=point.index,
                integration_time=point.integration_time,
                phases=point.phases,
                singles=point.singles,
                curves=curve_points,
            )
        )

    fits: Dict[str, Dict[str, FringeFit]] = {}
    for name in curves:
        variants = {}
        raw_points = [
            point
            for point in (record.curves[name].E_raw for record in records)
            if point is not None
        ]
        raw_fit = _fit_or_none(raw_points, f"{name} raw")
        if raw_fit is not None:
            variants[RAW] = raw_fit
        net_points = [
            point
            for point in (record.curves[name].E_net for record in records)
            if point is not None
        ]
        net_fit = _fit_or_none(net_points, f"{name} net")
        if net_fit is not None:
            variants[NET] = net_fit
        fits[name] = variants

    if plan.mode == EXPERIMENT1:
        bell = _bell_experiment1(records, fits)
    else:
        bell = _bell_experiment2(records, fits, curves)
    for result in bell:
        logger.info(
            "S (%s, %s) = %.3f ± %.3f",
            result.mode,
            result.variant,
            result.S,
            result.sigma_S,
        )

    consistency = {}
    for detector in counts[0].singles:
        consistency[detector] = singles_consistency(
            [point.singles[detector] for point in counts],
            [point.integration_time for point in counts],
        )
        if not consistency[detector].consistent:
            logger.warning(
                "Singles of %s vary across scan points (p = %.3g)",
                detector,
                consistency[detector].p_value,
            )

    raw_fit = fits[curves[0]].get(RAW)
    error_rate = None if raw_fit is None else qber(min(1.0, raw_fit.visibility))
    scenario_document = dict(scenario_to_document(scenario))
    plan_document = dict(plan_to_document(plan))
    return ExperimentReport(
        identifier=calculate_identifier(
            scenario_document, plan_document, scenario.rng_seed
        ),
        mode=plan.mode,
        seed=scenario.rng_seed,
        chsh_selection=plan.chsh_selection,
        scenario=scenario_document,
        plan=plan_document,
        link_offset=link_offset,
        histogram=histogram,
        points=tuple(records),
        fits=fits,
        bell=tuple(bell),
        singles_consistency=consistency,
        schedules=tuple(schedules),
        qber=error_rate,
        below_bell_threshold=(
            None if error_rate is None else violates_bell(error_rate)
        ),
        expectations=expectations(scenario),
    )


def check_schedule(
    scenario: ScenarioConfig,
    spec: ScheduleSpec,
    seed: np.random.SeedSequence,
    link_offset: float,
    max_expected_tags: float = DEFAULT_MAX_EXPECTED_TAGS,
) -> ScheduleCheck:
    """Acquire with ramping phases and compare the fringe rate to ``|v₁ + v₂|``

    Coincidences are binned by their side-a time and a correlation coefficient is
    computed per bin. When the expected rate is below one fringe per acquisition
    the coefficient must be constant (χ² p-value above 0.001); otherwise the peak
    of a Lomb-Scargle periodogram must lie within ``2π / duration`` of it.
    With coincidences in fewer than four bins nothing is checked and ``passed`` is
    ``None``.

    """
    assert not isinstance(scenario.analyzer_b, PassiveChoice)
    ramping = replace(
        scenario,
        analyzer_a=replace(
            scenario.analyzer_a,
            phase=spec.start_1,
            phase_schedule=PhaseSchedule(spec.start_1, spec.rate_1),
        ),
        analyzer_b=replace(
            scenario.analyzer_b,
            phase=spec.start_2,
            phase_schedule=PhaseSchedule(spec.start_2, spec.rate_2),
        ),
        coincidence=replace(scenario.coincidence, integration_time=spec.duration),
    )
    streams = run_scenario(ramping, seed, max_expected_tags)
    times = []
    agreements = []
    for sign_a in ("+", "-"):
        for sign_b in ("+", "-"):
            stream_a = streams[f"a{sign_a}"]
            matches = match_coincidences(
                stream_a,
                streams[f"b{sign_b}"],
                scenario.coincidence.window,
                link_offset,
            )
            indices = np.array([index for index, _ in matches], dtype=np.int64)
            times.append(stream_a.times[indices])
            agreements.append(
                np.full(len(indices), PORT_SIGNS[sign_a] * PORT_SIGNS[sign_b] > 0)
            )
    all_times = np.concatenate(times)
    agree_flags = np.concatenate(agreements)
    edges = np.linspace(0.0, spec.duration, spec.bins + 1)
    which = np.clip(np.digitize(all_times, edges) - 1, 0, spec.bins - 1)
    total = np.bincount(which, minlength=spec.bins).astype(float)
    agree = np.bincount(which, weights=agree_flags.astype(float), minlength=spec.bins)
    occupied = total > 0
    centers = ((edges[:-1] + edges[1:]) / 2)[occupied]
    total = total[occupied]
    agree = agree[occupied]
    disagree = total - agree
    E = (agree - disagree) / total
    sigma = 2 * np.sqrt(agree * disagree / total**3)

    measured: Optional[float] = None
    flat_p_value: Optional[float] = None
    passed: Optional[bool] = None
    usable = sigma > 0
    if len(centers) < MIN_SCHEDULE_BINS:
        logger.warning(
            "Phase ramps %.4g and %.4g rad/s not checked: coincidences in %d bins",
            spec.rate_1,
            spec.rate_2,
            len(centers),
        )
    elif spec.expected_rate < spec.resolution:
        if usable.sum() >= 2:
            weights = 1 / sigma[usable] ** 2
            mean = float(np.sum(weights * E[usable]) / weights.sum())
            statistic = float(np.sum(weights * (E[usable] - mean) ** 2))
            flat_p_value = float(chi2.sf(statistic, int(usable.sum()) - 1))
        else:
            flat_p_value = 1.0
        passed = flat_p_value > CONSISTENCY_P_VALUE
    else:
        frequencies = np.linspace(spec.resolution / 4, spec.nyquist_rate, 4096)
        power = lombscargle(centers, E - E.mean(), frequencies)
        measured = float(frequencies[int(np.argmax(power))])
        passed = abs(measured - spec.expected_rate) <= spec.resolution
    if passed is not None:
        logger.info(
            "Phase ramps %.4g and %.4g rad/s: expected fringe %.4g rad/s, measured %s",
            spec.rate_1,
            spec.rate_2,
            spec.expected_rate,
            "flat" if measured is None else f"{measured:.4g} rad/s",
        )
    if passed is False:
        logger.warning(
            "Fringe of phase ramps %.4g and %.4g rad/s does not follow the phase sum",
            spec.rate_1,
            spec.rate_2,
        )
    return ScheduleCheck(
        rate_1=spec.rate_1,
        rate_2=spec.rate_2,
        duration=spec.duration,
        expected_rate=spec.expected_rate,
        measured_rate=measured,
        flat_p_value=flat_p_value,
        passed=passed,
        times=tuple(float(time) for time in centers),
        E=tuple(float(value) for value in E),
        sigma_E=tuple(float(value) for value in sigma),
    )


def _calibrate(
    scenario: ScenarioConfig, plan: ScanPlan, max_expected_tags: float
) -> Tuple[LinkOffsetCalibration, DiffHistogram]:
    calibration_scenario = with_phases(
        scenario, point_phases(scenario, plan.points[0]), plan.calibration_time
    )
    streams = run_scenario(
        calibration_scenario,
        np.random.SeedSequence(scenario.rng_seed, spawn_key=(CALIBRATION_STREAM,)),
        max_expected_tags,
    )
    side_a, side_b = (
        merge_streams(
            [streams[port.detector] for port in scenario.ports if port.side == side],
            side,
        )
        for side in ("a", "b")
    )
    nominal = scenario.nominal_link_offset
    configured = scenario.coincidence.link_offset
    if configured is not None:
        logger.info("Using the configured link offset %.4e s", configured)
        calibration = LinkOffsetCalibration(configured, nominal, 0, 0.0, False)
    else:
        calibration = calibrate_link_offset(
            side_a, side_b, scenario.coincidence.window, nominal
        )
    histogram = build_histogram(
        side_a,
        side_b,
        HISTOGRAM_BIN_WIDTH,
        2 * scenario.arm_imbalance_delay,
        calibration.offset,
    )
    return calibration, histogram


def _run(
    scenario: ScenarioConfig,
    plan: ScanPlan,
    workers: int,
    max_expected_tags: float,
    dump_directory: Optional[Path],
) -> ExperimentReport:
    calibration, histogram = _calibrate(scenario, plan, max_expected_tags)
    tasks = [
        PointTask(
            index=index,
            scenario=with_phases(
                scenario, point_phases(scenario, point), point.integration_time
            ),
            seed=np.random.SeedSequence(
                scenario.rng_seed, spawn_key=(POINT_STREAM, index)
            ),
            link_offset=calibration.offset,
            max_expected_tags=max_expected_tags,
            dump_path=(
                None if dump_directory is None else dump_directory / dump_name(index)
            ),
        )
        for index, point in enumerate(plan.points)
    ]
    if dump_directory is not None:
        dump_directory.mkdir(parents=True, exist_ok=True)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            counts = list(executor.map(measure_point, tasks))
    else:
        counts = [measure_point(task) for task in tasks]
    schedules = [
        check_schedule(
            scenario,
            spec,
            np.random.SeedSequence(
                scenario.rng_seed, spawn_key=(SCHEDULE_STREAM, index)
            ),
            calibration.offset,
            max_expected_tags,
        )
        for index, spec in enumerate(plan.schedules)
    ]
    return assemble_report(scenario, plan, counts, calibration, histogram, schedules)


def run_experiment1(
    scenario: ScenarioConfig,
    plan: ScanPlan,
    workers: int = 1,
    max_expected_tags: float = DEFAULT_MAX_EXPECTED_TAGS,
    dump_directory: Optional[Path] = None,
) -> ExperimentReport:
    """Scan the phase sum of two two-channel analyzers

    :param scenario: Scenario with one interferometer on each side
    :param plan: An ``experiment1`` plan
    :param workers: Number of processes simulating scan points
    :param max_expected_tags: Tag limit of each acquisition
    :param dump_directory: Write the time tags of every point here if given
    :return: The report
    :raises TopologyError: If an analyzer is single-channel or side b is a passive
                           choice
    :raises PlanValidationError: If the plan is for the other experiment

    """
    if plan.mode != EXPERIMENT1:
        raise PlanValidationError(
            "mode", f"run_experiment1 needs an {EXPERIMENT1} plan"
        )
    if isinstance(scenario.analyzer_b, PassiveChoice):
        raise TopologyError("Experiment 1 needs a single interferometer on side b")
    if not (scenario.analyzer_a.two_channel and scenario.analyzer_b.two_channel):
        raise TopologyError(
            "Experiment 1 needs both output ports instrumented on both sides"
        )
    return _run(scenario, plan, workers, max_expected_tags, dump_directory)


def run_experiment2(
    scenario: ScenarioConfig,
    plan: ScanPlan,
    workers: int = 1,
    max_expected_tags: float = DEFAULT_MAX_EXPECTED_TAGS,
    dump_directory: Optional[Path] = None,
) -> ExperimentReport:
    """Scan analyzer a against a passive choice between two fixed analyzers

    Both correlation curves come from the same acquisitions; with single-channel
    side-b analyzers they are reconstructed assuming symmetric port statistics.

    :raises TopologyError: If side b is not a passive choice or side a is
                           single-channel

    """
    if plan.mode != EXPERIMENT2:
        raise PlanValidationError(
            "mode", f"run_experiment2 needs an {EXPERIMENT2} plan"
        )
    if not isinstance(scenario.analyzer_b, PassiveChoice):
        raise TopologyError("Experiment 2 needs a passive choice on side b")
    if not scenario.analyzer_a.two_channel:
        raise TopologyError(
            "Experiment 2 needs both output ports of analyzer a instrumented"
        )
    return _run(scenario, plan, workers, max_expected_tags, dump_directory)


def run_experiment(
    scenario: ScenarioConfig,
    plan: ScanPlan,
    workers: int = 1,
    max_expected_tags: float = DEFAULT_MAX_EXPECTED_TAGS,
    dump_directory: Optional[Path] = None,
) -> ExperimentReport:
    """Run the experiment the plan's mode names"""
    runner = run_experiment1 if plan.mode == EXPERIMENT1 else run_experiment2
    return runner(scenario, plan, workers, max_expected_tags, dump_directory)


def analyze_dump(
    report: ExperimentReport, tags_directory: Path, window: Optional[float] = None
) -> ExperimentReport:
    """Recount the time tags dumped by an earlier run and redo its statistics

    :param report: The report of the run that dumped the tags
    :param tags_directory: Directory holding one ``tags-NNN.npz`` file per point
    :param window: Coincidence window to use instead of the scenario's
    :return: A new report; calibration, histogram and phase ramps are carried over

    """
    scenario = document_to_scenario(report.scenario)
    if window is not None:
        coincidence = replace(scenario.coincidence, window=window)
        scenario = replace(scenario, coincidence=coincidence)
    plan = document_to_plan(report.plan)
    counts = []
    for point, record in zip(plan.points, report.points):
        point_scenario = with_phases(
            scenario, point_phases(scenario, point), point.integration_time
        )
        streams = read_streams(tags_directory / dump_name(record.index))
        counts.append(
            count_point(
                record.index, point_scenario, streams, report.link_offset.offset
            )
        )
    return assemble_report(
        scenario, plan, counts, report.link_offset, report.histogram, report.schedules
    )
