"""Read scenario documents and convert them to validated simulation parameters.

A scenario document is YAML. Every key below ``schema_version`` is optional unless
marked otherwise; omitted keys take the defaults listed in the dataclasses::

    schema_version: 1          # required
    rng_seed: 1
    source:
      pair_rate: 6.0e6         # required, pairs per second
      split_fraction: 0.5
      intrinsic_visibility: 0.955
      phase_offset: 0.0
    link_a: {length: 8.1, attenuation: 0.35, propagation_delay_per_km: 4.9e-6}
    link_b: {length: 9.3}
    analyzer_a:
      phase: 0.0
      phase_schedule: {start: 0.0, rate: 0.1}
      arm_imbalance_delay: 1.2e-9
      insertion_loss: 2.0
      two_channel: true
    analyzer_b:                # a single interferometer, or a passive choice:
      coupler_split: 0.5
      coupler_excess_loss: 0.3
      b1: {phase: 0.0, two_channel: false}
      b2: {phase: -1.5707963267948966, two_channel: false}
    detectors:                 # one entry per instrumented port
      a+: {efficiency: 0.014, dark_rate: 26000.0, timing_jitter_sigma: 1.0e-10}
    coincidence:
      window: 5.5e-10
      accidental_offset: 1.0e-8
      integration_time: 30.0
      link_offset: null        # calibrated from the histogram when null

Detector identifiers are the analyzer name followed by the port sign: ``a+``,
``a-``, ``b+``, ``b-`` for a single interferometer on side b, ``b1+``, ``b2+`` etc.
for a passive choice.

"""

import math
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Dict, List, Mapping, NotRequired, Optional, Tuple, TypedDict, Union

import ruamel.yaml

yaml = ruamel.yaml.YAML()

SCHEMA_VERSION = 1

# standard telecom fiber at 1310 nm
DEFAULT_ATTENUATION = 0.35
# group index 1.468
DEFAULT_PROPAGATION_DELAY = 4.9e-6
DEFAULT_ARM_IMBALANCE = 1.2e-9
DEFAULT_JITTER = 100e-12
DEFAULT_EFFICIENCY = 0.1
DEFAULT_WINDOW = 550e-12
DEFAULT_ACCIDENTAL_OFFSET = 10e-9
DEFAULT_INTEGRATION_TIME = 30.0

PORT_SIGNS = {"+": 1, "-": -1}


class ScenarioParseError(ValueError):
    """Raised when a scenario document is not valid YAML"""


class ScenarioValidationError(ValueError):
    """Raised when a scenario violates an invariant

    :param field_path: Dotted path of the offending field, e.g. ``source.pair_rate``
    :param message: What is wrong with the value

    """

    def __init__(self, field_path: str, message: str) -> None:
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path
        self.message = message

    def within(self, prefix: str) -> "ScenarioValidationError":
        """Return the same error with ``prefix`` prepended to the field path"""
        return ScenarioValidationError(f"{prefix}.{self.field_path}", self.message)


def _require(condition: bool, field_path: str, message: str) -> None:
    if not condition:
        raise ScenarioValidationError(field_path, message)


def _require_finite(value: float, field_path: str) -> None:
    _require(math.isfinite(value), field_path, f"must be finite, got {value!r}")


def _require_unit_interval(value: float, field_path: str) -> None:
    _require_finite(value, field_path)
    _require(0.0 <= value <= 1.0, field_path, f"must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class SourceParams:
    """Pair source: emission rate, splitting at the source coupler and visibility"""

    pair_rate: float
    split_fraction: float = 0.5
    intrinsic_visibility: float = 1.0
    phase_offset: float = 0.0

    def __post_init__(self) -> None:
        _require_finite(self.pair_rate, "pair_rate")
        _require(self.pair_rate > 0, "pair_rate", "must be positive")
        _require_unit_interval(self.split_fraction, "split_fraction")
        _require_unit_interval(self.intrinsic_visibility, "intrinsic_visibility")
        _require_finite(self.phase_offset, "phase_offset")


@dataclass(frozen=True)
class FiberLink:
    """Fiber from the source to one side of the experiment"""

    length: float
    attenuation: float = DEFAULT_ATTENUATION
    propagation_delay_per_km: float = DEFAULT_PROPAGATION_DELAY

    def __post_init__(self) -> None:
        _require_finite(self.length, "length")
        _require(self.length >= 0, "length", "must not be negative")
        _require_finite(self.attenuation, "attenuation")
        _require(self.attenuation >= 0, "attenuation", "must not be negative")
        _require_finite(self.propagation_delay_per_km, "propagation_delay_per_km")
        _require(
            self.propagation_delay_per_km >= 0,
            "propagation_delay_per_km",
            "must not be negative",
        )
        _require(self.survival > 0, "attenuation", "survival probability underflows")

    @property
    def loss(self) -> float:
        """Total fiber loss in dB"""
        return self.attenuation * self.length

    @property
    def survival(self) -> float:
        return 10 ** (-self.loss / 10)

    @property
    def delay(self) -> float:
        """Propagation delay from the source in seconds"""
        return self.length * self.propagation_delay_per_km


@dataclass(frozen=True)
class PhaseSchedule:
    """Linear phase ramp ``start + rate * t``"""

    start: float
    rate: float

    def __post_init__(self) -> None:
        _require_finite(self.start, "start")
        _require_finite(self.rate, "rate")

    def at(self, time: float) -> float:
        return self.start + self.rate * time


@dataclass(frozen=True)
class InterferometerParams:
    """Unbalanced Michelson analyzer with one or two instrumented output ports"""

    phase: float = 0.0
    phase_schedule: Optional[PhaseSchedule] = None
    arm_imbalance_delay: float = DEFAULT_ARM_IMBALANCE
    insertion_loss: float = 0.0
    two_channel: bool = True

    def __post_init__(self) -> None:
        _require_finite(self.phase, "phase")
        if self.phase_schedule is not None:
            _require(
                math.isclose(self.phase_schedule.start, self.phase, abs_tol=1e-12),
                "phase_schedule.start",
                f"must equal phase {self.phase!r} at t=0",
            )
        _require_finite(self.arm_imbalance_delay, "arm_imbalance_delay")
        _require(
            self.arm_imbalance_delay > 0, "arm_imbalance_delay", "must be positive"
        )
        _require_finite(self.insertion_loss, "insertion_loss")
        _require(self.insertion_loss >= 0, "insertion_loss", "must not be negative")

    @property
    def phase_rate(self) -> float:
        """Phase change in radians per second, zero for a fixed phase"""
        return 0.0 if self.phase_schedule is None else self.phase_schedule.rate

    @property
    def survival(self) -> float:
        return 10 ** (-self.insertion_loss / 10)

    @property
    def ports(self) -> Tuple[str, ...]:
        """Instrumented port signs, ``+`` being the direct port"""
        return ("+", "-") if self.two_channel else ("+",)


@dataclass(frozen=True)
class PassiveChoice:
    """A fiber coupler randomly routing side-b photons to one of two analyzers"""

    b1: InterferometerParams
    b2: InterferometerParams
    coupler_split: float = 0.5
    coupler_excess_loss: float = 0.0

    def __post_init__(self) -> None:
        _require_unit_interval(self.coupler_split, "coupler_split")
        _require_finite(self.coupler_excess_loss, "coupler_excess_loss")
        _require(
            self.coupler_excess_loss >= 0, "coupler_excess_loss", "must not be negative"
        )

    @property
    def survival(self) -> float:
        return 10 ** (-self.coupler_excess_loss / 10)


@dataclass(frozen=True)
class DetectorParams:
    """Photon counter behind one analyzer port"""

    efficiency: float = DEFAULT_EFFICIENCY
    dark_rate: float = 0.0
    timing_jitter_sigma: float = DEFAULT_JITTER

    def __post_init__(self) -> None:
        _require_unit_interval(self.efficiency, "efficiency")
        _require_finite(self.dark_rate, "dark_rate")
        _require(self.dark_rate >= 0, "dark_rate", "must not be negative")
        _require_finite(self.timing_jitter_sigma, "timing_jitter_sigma")
        _require(
            self.timing_jitter_sigma >= 0, "timing_jitter_sigma", "must not be negative"
        )


@dataclass(frozen=True)
class CoincidenceParams:
    """Coincidence logic: full window width, accidental offset and integration time"""

    window: float = DEFAULT_WINDOW
    accidental_offset: float = DEFAULT_ACCIDENTAL_OFFSET
    integration_time: float = DEFAULT_INTEGRATION_TIME
    link_offset: Optional[float] = None

    def __post_init__(self) -> None:
        _require_finite(self.window, "window")
        _require(self.window > 0, "window", "must be positive")
        _require_finite(self.accidental_offset, "accidental_offset")
        _require_finite(self.integration_time, "integration_time")
        _require(self.integration_time > 0, "integration_time", "must be positive")
        if self.link_offset is not None:
            _require_finite(self.link_offset, "link_offset")


Analyzer = Union[InterferometerParams, PassiveChoice]


@dataclass(frozen=True)
class Port:
    """An instrumented analyzer output and the detector attached to it"""

    side: str
    analyzer: str
    sign: int
    detector: str


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete physical description of one Franson experiment

    The ``detectors`` mapping is not mutated after construction.

    """

    source: SourceParams
    link_a: FiberLink
    link_b: FiberLink
    analyzer_a: InterferometerParams
    analyzer_b: Analyzer
    detectors: Dict[str, DetectorParams]
    coincidence: CoincidenceParams = field(default_factory=CoincidenceParams)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        _require(
            0 <= self.rng_seed < 2**64, "rng_seed", "must be a 64-bit unsigned integer"
        )
        for name, analyzer in self.analyzers.items():
            _require(
                math.isclose(
                    analyzer.arm_imbalance_delay, self.arm_imbalance_delay, rel_tol=1e-9
                ),
                f"{self._analyzer_path(name)}.arm_imbalance_delay",
                "all analyzers must share one arm imbalance",
            )
        path = f"{self._analyzer_path('a')}.arm_imbalance_delay"
        _require(
            self.arm_imbalance_delay > self.coincidence.window,
            path,
            "must exceed the coincidence window so satellite peaks are resolvable",
        )
        _require(
            self.coincidence.accidental_offset
            > self.arm_imbalance_delay + self.coincidence.window,
            "coincidence.accidental_offset",
            "the displaced window must lie outside all three peaks"
            " (offset > arm_imbalance_delay + window)",
        )
        expected = {port.detector for port in self.ports}
        for name in sorted(set(self.detectors) - expected):
            raise ScenarioValidationError(
                f"detectors.{name}", "does not name an instrumented port"
            )
        for name in sorted(expected - set(self.detectors)):
            raise ScenarioValidationError(
                f"detectors.{name}", "instrumented port has no detector"
            )

    @staticmethod
    def _analyzer_path(name: str) -> str:
        if name in ("a", "b"):
            return f"analyzer_{name}"
        return f"analyzer_b.{name}"

    @property
    def passive_choice(self) -> bool:
        return isinstance(self.analyzer_b, PassiveChoice)

    @property
    def analyzers(self) -> Dict[str, InterferometerParams]:
        """All interferometers by name: ``a`` and ``b``, or ``a``, ``b1`` and ``b2``"""
        if isinstance(self.analyzer_b, PassiveChoice):
            return {
                "a": self.analyzer_a,
                "b1": self.analyzer_b.b1,
                "b2": self.analyzer_b.b2,
            }
        return {"a": self.analyzer_a, "b": self.analyzer_b}

    @property
    def arm_imbalance_delay(self) -> float:
        return self.analyzer_a.arm_imbalance_delay

    @property
    def ports(self) -> List[Port]:
        """Instrumented ports in canonical order"""
        return [
            Port(
                side="a" if name == "a" else "b",
                analyzer=name,
                sign=PORT_SIGNS[sign],
                detector=f"{name}{sign}",
            )
            for name, analyzer in self.analyzers.items()
            for sign in analyzer.ports
        ]

    @property
    def nominal_link_offset(self) -> float:
        """Arrival-time difference ``t_a - t_b`` expected from the fiber lengths"""
        return self.link_a.delay - self.link_b.delay


class ScheduleDocument(TypedDict):
    """A linear phase schedule in the scenario YAML format"""

    start: float
    rate: float


class SourceDocument(TypedDict):
    """Source parameters in the scenario YAML format"""

    pair_rate: float
    split_fraction: NotRequired[float]
    intrinsic_visibility: NotRequired[float]
    phase_offset: NotRequired[float]


class FiberDocument(TypedDict):
    """A fiber link in the scenario YAML format"""

    length: float
    attenuation: NotRequired[float]
    propagation_delay_per_km: NotRequired[float]


class InterferometerDocument(TypedDict):
    """An analyzing interferometer in the scenario YAML format"""

    phase: NotRequired[float]
    phase_schedule: NotRequired[Optional[ScheduleDocument]]
    arm_imbalance_delay: NotRequired[float]
    insertion_loss: NotRequired[float]
    two_channel: NotRequired[bool]


class PassiveChoiceDocument(TypedDict):
    """A coupler feeding two analyzers in the scenario YAML format"""

    b1: InterferometerDocument
    b2: InterferometerDocument
    coupler_split: NotRequired[float]
    coupler_excess_loss: NotRequired[float]


class DetectorDocument(TypedDict):
    """A photon counter in the scenario YAML format"""

    efficiency: NotRequired[float]
    dark_rate: NotRequired[float]
    timing_jitter_sigma: NotRequired[float]


class CoincidenceDocument(TypedDict):
    """Coincidence logic in the scenario YAML format"""

    window: NotRequired[float]
    accidental_offset: NotRequired[float]
    integration_time: NotRequired[float]
    link_offset: NotRequired[Optional[float]]


class ScenarioDocument(TypedDict):
    """A scenario in the YAML format"""

    schema_version: int
    source: SourceDocument
    link_a: FiberDocument
    link_b: FiberDocument
    analyzer_a: InterferometerDocument
    analyzer_b: Union[InterferometerDocument, PassiveChoiceDocument]
    detectors: Dict[str, DetectorDocument]
    coincidence: NotRequired[CoincidenceDocument]
    rng_seed: NotRequired[int]


Node = Mapping[str, object]


def as_mapping(value: object, path: str) -> Node:
    if not isinstance(value, Mapping):
        raise ScenarioValidationError(path, "must be a mapping")
    for key in value:
        if not isinstance(key, str):
            raise ScenarioValidationError(path, f"key {key!r} is not a string")
    return value


def check_keys(node: Node, allowed: Tuple[str, ...], path: str) -> None:
    for key in node:
        if key not in allowed:
            field_path = f"{path}.{key}" if path else key
            raise ScenarioValidationError(field_path, "unknown field")


def read_number(
    node: Node, key: str, path: str, default: Optional[float] = None
) -> float:
    field_path = f"{path}.{key}" if path else key
    if key not in node:
        if default is None:
            raise ScenarioValidationError(field_path, "is required")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioValidationError(field_path, f"must be a number, got {value!r}")
    return float(value)


def read_integer(node: Node, key: str, path: str, default: Optional[int] = None) -> int:
    field_path = f"{path}.{key}" if path else key
    if key not in node:
        if default is None:
            raise ScenarioValidationError(field_path, "is required")
        return default
    value = node[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioValidationError(field_path, f"must be an integer, got {value!r}")
    return int(value)


def _flag(node: Node, key: str, path: str, default: bool) -> bool:
    value = node.get(key, default)
    if not isinstance(value, bool):
        field_path = f"{path}.{key}" if path else key
        raise ScenarioValidationError(
            field_path, f"must be true or false, got {value!r}"
        )
    return value


def _source(node: Node) -> SourceParams:
    check_keys(
        node,
        ("pair_rate", "split_fraction", "intrinsic_visibility", "phase_offset"),
        "",
    )
    return SourceParams(
        pair_rate=read_number(node, "pair_rate", ""),
        split_fraction=read_number(node, "split_fraction", "", 0.5),
        intrinsic_visibility=read_number(node, "intrinsic_visibility", "", 1.0),
        phase_offset=read_number(node, "phase_offset", "", 0.0),
    )


def _fiber(node: Node) -> FiberLink:
    check_keys(node, ("length", "attenuation", "propagation_delay_per_km"), "")
    return FiberLink(
        length=read_number(node, "length", ""),
        attenuation=read_number(node, "attenuation", "", DEFAULT_ATTENUATION),
        propagation_delay_per_km=read_number(
            node, "propagation_delay_per_km", "", DEFAULT_PROPAGATION_DELAY
        ),
    )


def _interferometer(node: Node) -> InterferometerParams:
    check_keys(
        node,
        (
            "phase",
            "phase_schedule",
            "arm_imbalance_delay",
            "insertion_loss",
            "two_channel",
        ),
        "",
    )
    phase = read_number(node, "phase", "", 0.0)
    schedule: Optional[PhaseSchedule] = None
    if node.get("phase_schedule") is not None:
        schedule_node = as_mapping(node["phase_schedule"], "phase_schedule")
        check_keys(schedule_node, ("start", "rate"), "phase_schedule")
        schedule = PhaseSchedule(
            start=read_number(schedule_node, "start", "phase_schedule", phase),
            rate=read_number(schedule_node, "rate", "phase_schedule"),
        )
    return InterferometerParams(
        phase=phase,
        phase_schedule=schedule,
        arm_imbalance_delay=read_number(
            node, "arm_imbalance_delay", "", DEFAULT_ARM_IMBALANCE
        ),
        insertion_loss=read_number(node, "insertion_loss", "", 0.0),
        two_channel=_flag(node, "two_channel", "", True),
    )


def _analyzer_b(node: Node) -> Analyzer:
    if "b1" not in node and "b2" not in node:
        return _interferometer(node)
    check_keys(node, ("b1", "b2", "coupler_split", "coupler_excess_loss"), "")
    analyzers = []
    for name in ("b1", "b2"):
        if name not in node:
            raise ScenarioValidationError(name, "is required for a passive choice")
        analyzer_node = as_mapping(node[name], name)
        try:
            analyzers.append(_interferometer(analyzer_node))
        except ScenarioValidationError as exc_info:
            raise exc_info.within(name) from exc_info
    return PassiveChoice(
        b1=analyzers[0],
        b2=analyzers[1],
        coupler_split=read_number(node, "coupler_split", "", 0.5),
        coupler_excess_loss=read_number(node, "coupler_excess_loss", "", 0.0),
    )


def _detector(node: Node) -> DetectorParams:
    check_keys(node, ("efficiency", "dark_rate", "timing_jitter_sigma"), "")
    return DetectorParams(
        efficiency=read_number(node, "efficiency", "", DEFAULT_EFFICIENCY),
        dark_rate=read_number(node, "dark_rate", "", 0.0),
        timing_jitter_sigma=read_number(
            node, "timing_jitter_sigma", "", DEFAULT_JITTER
        ),
    )


def _coincidence(node: Node) -> CoincidenceParams:
    check_keys(
        node, ("window", "accidental_offset", "integration_time", "link_offset"), ""
    )
    link_offset = None
    if node.get("link_offset") is not None:
        link_offset = read_number(node, "link_offset", "")
    return CoincidenceParams(
        window=read_number(node, "window", "", DEFAULT_WINDOW),
        accidental_offset=read_number(
            node, "accidental_offset", "", DEFAULT_ACCIDENTAL_OFFSET
        ),
        integration_time=read_number(
            node, "integration_time", "", DEFAULT_INTEGRATION_TIME
        ),
        link_offset=link_offset,
    )


def document_to_scenario(document: object) -> ScenarioConfig:
    """Validate a parsed scenario document and convert it to a scenario

    :param document: The parsed YAML document
    :return: The validated scenario
    :raises ScenarioValidationError: If any invariant is violated

    """
    root = as_mapping(document, "<document>")
    check_keys(
        root,
        (
            "schema_version",
            "rng_seed",
            "source",
            "link_a",
            "link_b",
            "analyzer_a",
            "analyzer_b",
            "detectors",
            "coincidence",
        ),
        "",
    )
    version = read_integer(root, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ScenarioValidationError(
            "schema_version",
            f"unsupported version {version}, expected {SCHEMA_VERSION}",
        )

    def section(key: str, required: bool = True) -> Node:
        if key not in root:
            if required:
                raise ScenarioValidationError(key, "is required")
            return {}
        return as_mapping(root[key], key)

    try:
        source = _source(section("source"))
    except ScenarioValidationError as exc_info:
        raise exc_info.within("source") from exc_info
    links = []
    for key in ("link_a", "link_b"):
        try:
            links.append(_fiber(section(key)))
        except ScenarioValidationError as exc_info:
            raise exc_info.within(key) from exc_info
    try:
        analyzer_a = _interferometer(section("analyzer_a"))
    except ScenarioValidationError as exc_info:
        raise exc_info.within("analyzer_a") from exc_info
    try:
        analyzer_b = _analyzer_b(section("analyzer_b"))
    except ScenarioValidationError as exc_info:
        raise exc_info.within("analyzer_b") from exc_info
    detectors: Dict[str, DetectorParams] = {}
    for name, detector_node in section("detectors").items():
        detector_mapping = as_mapping(detector_node, f"detectors.{name}")
        try:
            detectors[name] = _detector(detector_mapping)
        except ScenarioValidationError as exc_info:
            raise exc_info.within(f"detectors.{name}") from exc_info
    try:
        coincidence = _coincidence(section("coincidence", required=False))
    except ScenarioValidationError as exc_info:
        raise exc_info.within("coincidence") from exc_info
    return ScenarioConfig(
        source=source,
        link_a=links[0],
        link_b=links[1],
        analyzer_a=analyzer_a,
        analyzer_b=analyzer_b,
        detectors=detectors,
        coincidence=coincidence,
        rng_seed=read_integer(root, "rng_seed", "", 0),
    )


def _interferometer_document(analyzer: InterferometerParams) -> InterferometerDocument:
    document = InterferometerDocument(
        phase=analyzer.phase,
        phase_schedule=None,
        arm_imbalance_delay=analyzer.arm_imbalance_delay,
        insertion_loss=analyzer.insertion_loss,
        two_channel=analyzer.two_channel,
    )
    if analyzer.phase_schedule is not None:
        document["phase_schedule"] = ScheduleDocument(
            start=analyzer.phase_schedule.start, rate=analyzer.phase_schedule.rate
        )
    return document


def scenario_to_document(scenario: ScenarioConfig) -> ScenarioDocument:
    """Convert a scenario to the YAML document format with every field spelled out

    :param scenario: The scenario to convert
    :return: The scenario in the document format

    """
    analyzer_b: Union[InterferometerDocument, PassiveChoiceDocument]
    if isinstance(scenario.analyzer_b, PassiveChoice):
        analyzer_b = PassiveChoiceDocument(
            coupler_split=scenario.analyzer_b.coupler_split,
            coupler_excess_loss=scenario.analyzer_b.coupler_excess_loss,
            b1=_interferometer_document(scenario.analyzer_b.b1),
            b2=_interferometer_document(scenario.analyzer_b.b2),
        )
    else:
        analyzer_b = _interferometer_document(scenario.analyzer_b)
    return ScenarioDocument(
        schema_version=SCHEMA_VERSION,
        rng_seed=scenario.rng_seed,
        source=SourceDocument(
            pair_rate=scenario.source.pair_rate,
            split_fraction=scenario.source.split_fraction,
            intrinsic_visibility=scenario.source.intrinsic_visibility,
            phase_offset=scenario.source.phase_offset,
        ),
        link_a=FiberDocument(
            length=scenario.link_a.length,
            attenuation=scenario.link_a.attenuation,
            propagation_delay_per_km=scenario.link_a.propagation_delay_per_km,
        ),
        link_b=FiberDocument(
            length=scenario.link_b.length,
            attenuation=scenario.link_b.attenuation,
            propagation_delay_per_km=scenario.link_b.propagation_delay_per_km,
        ),
        analyzer_a=_interferometer_document(scenario.analyzer_a),
        analyzer_b=analyzer_b,
        detectors={
            name: DetectorDocument(
                efficiency=detector.efficiency,
                dark_rate=detector.dark_rate,
                timing_jitter_sigma=detector.timing_jitter_sigma,
            )
            for name, detector in scenario.detectors.items()
        },
        coincidence=CoincidenceDocument(
            window=scenario.coincidence.window,
            accidental_offset=scenario.coincidence.accidental_offset,
            integration_time=scenario.coincidence.integration_time,
            link_offset=scenario.coincidence.link_offset,
        ),
    )


def load_scenario(text: str) -> ScenarioConfig:
    """Parse and validate a scenario YAML document

    :param text: The YAML text
    :return: The validated scenario
    :raises ScenarioParseError: If the text is not valid YAML
    :raises ScenarioValidationError: If the document violates an invariant

    """
    try:
        document: object = yaml.load(text)
    except ruamel.yaml.YAMLError as exc_info:
        raise ScenarioParseError(
            f"Malformed scenario document: {exc_info}"
        ) from exc_info
    return document_to_scenario(document)


def read_scenario(path: Path) -> ScenarioConfig:
    """Read a scenario YAML file

    :param path: Path to the scenario file
    :return: The validated scenario

    """
    with path.open(encoding="utf-8") as scenario_file:
        return load_scenario(scenario_file.read())


def emit_scenario(scenario: ScenarioConfig) -> str:
    """Dump a scenario as a YAML document which `load_scenario` reads back unchanged

    :param scenario: The scenario to dump
    :return: The YAML text

    """
    buffer = StringIO()
    yaml.dump(scenario_to_document(scenario), buffer)
    return buffer.getvalue()
