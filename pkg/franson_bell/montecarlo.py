"""Turn a scenario into per-detector time-tag streams

Pair emissions are a homogeneous Poisson process. Instead of generating every
emitted pair and discarding the ones lost on the way, emissions are generated
separately for each survival class (both photons, only the photon to a, only the
photon to b), which is an exact thinning of the same process. A second
acceptance step applies the port- and route-dependent part of the detection
probability.

"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy.special import erf

from franson_bell.quantum import TimePeak, sample_outcomes
from franson_bell.scenario import PORT_SIGNS, PassiveChoice, ScenarioConfig

logger = logging.getLogger(__name__)

DEFAULT_MAX_EXPECTED_TAGS = 50_000_000
PICOSECOND = 1e-12


class ResourceLimitError(RuntimeError):
    """Raised when a simulation would produce more tags than allowed"""


class Provenance(IntEnum):
    """Origin of a time tag, kept as truth metadata for diagnostics"""

    DARK = 0
    CENTRAL = 1
    EARLY = 2
    LATE = 3
    # photon whose twin left the source through the same fiber
    UNPAIRED = 4


@dataclass(frozen=True)
class TimeTag:
    """One detection event"""

    time: float
    detector: str
    provenance: Provenance
    pair_id: int


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Time-sorted detections of one detector

    :param detector: Detector identifier
    :param times: Detection times in seconds, ascending
    :param provenance: `Provenance` code of each tag
    :param pair_ids: Emission index of each tag, -1 for dark counts
    :param duration: Length of the acquisition window in seconds

    """

    detector: str
    times: np.ndarray
    provenance: np.ndarray
    pair_ids: np.ndarray
    duration: float

    def __post_init__(self) -> None:
        if not len(self.times) == len(self.provenance) == len(self.pair_ids):
            raise ValueError(f"Ragged tag arrays for detector {self.detector}")

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (
            self.detector == other.detector
            and self.duration == other.duration
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.provenance, other.provenance)
            and np.array_equal(self.pair_ids, other.pair_ids)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def rate(self) -> float:
        """Mean count rate in Hz"""
        return len(self) / self.duration

    @property
    def tags(self) -> Iterator[TimeTag]:
        for time, provenance, pair_id in zip(
            self.times, self.provenance, self.pair_ids
        ):
            yield TimeTag(
                float(time), self.detector, Provenance(int(provenance)), int(pair_id)
            )

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times) >= 0))


def _empty_stream(detector: str, duration: float) -> TimeTagStream:
    return TimeTagStream(
        detector,
        np.empty(0),
        np.empty(0, dtype=np.int8),
        np.empty(0, dtype=np.int64),
        duration,
    )


def generate_pair_emissions(
    pair_rate: float, duration: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw emission times of a homogeneous Poisson process

    :param pair_rate: Mean emission rate in Hz; zero gives no emissions
    :param duration: Length of the interval in seconds
    :param rng: Random generator
    :return: Sorted emission times in [0, duration]

    """
    if pair_rate < 0 or duration <= 0:
        raise ValueError(
            f"Invalid Poisson process: rate {pair_rate}, duration {duration}"
        )
    count = rng.poisson(pair_rate * duration)
    return np.sort(rng.uniform(0.0, duration, count))


def generate_dark_counts(
    dark_rate: float, duration: float, rng: np.random.Generator, detector: str = "dark"
) -> TimeTagStream:
    """Draw dark counts of one detector

    :param dark_rate: Dark count rate in Hz
    :param duration: Length of the acquisition window in seconds
    :param rng: Random generator
    :param detector: Identifier of the detector
    :return: The dark counts as a stream

    """
    times = generate_pair_emissions(dark_rate, duration, rng)
    return TimeTagStream(
        detector,
        times,
        np.full(len(times), Provenance.DARK, dtype=np.int8),
        np.full(len(times), -1, dtype=np.int64),
        duration,
    )


def side_analyzers(scenario: ScenarioConfig, side: str) -> Tuple[str, ...]:
    """Names of the analyzers a photon on ``side`` can be routed to, in route order"""
    if side == "a":
        return ("a",)
    if isinstance(scenario.analyzer_b, PassiveChoice):
        return ("b1", "b2")
    return ("b",)


def route_probabilities(scenario: ScenarioConfig, side: str) -> Tuple[float, ...]:
    if side == "b" and isinstance(scenario.analyzer_b, PassiveChoice):
        split = scenario.analyzer_b.coupler_split
        return (split, 1 - split)
    return (1.0,)


def detection_probability(scenario: ScenarioConfig, detector: str) -> float:
    """Probability that a photon routed to the detector's port is registered

    :param scenario: The scenario
    :param detector: Detector identifier, e.g. ``a+`` or ``b1+``
    :return: Fiber, coupler, insertion and detector transmission combined

    """
    analyzer_name = detector[:-1]
    analyzer = scenario.analyzers[analyzer_name]
    if analyzer_name == "a":
        probability = scenario.link_a.survival
    else:
        probability = scenario.link_b.survival
        if isinstance(scenario.analyzer_b, PassiveChoice):
            probability *= scenario.analyzer_b.survival
    return probability * analyzer.survival * scenario.detectors[detector].efficiency


def _side_ceiling(scenario: ScenarioConfig, side: str) -> float:
    return max(
        detection_probability(scenario, port.detector)
        for port in scenario.ports
        if port.side == side
    )


def window_capture(window: float, jitter_a: float, jitter_b: float) -> float:
    """Fraction of a Gaussian-broadened peak inside a centred window of full width"""
    sigma = math.hypot(jitter_a, jitter_b)
    if sigma == 0:
        return 1.0
    return float(erf(window / 2 / (math.sqrt(2) * sigma)))


@dataclass(frozen=True)
class ExpectedRates:
    """Closed-form rates of a scenario, all in Hz

    :param singles: Mean count rate per detector
    :param true_coincidences: Central-peak coincidences per port pair inside the
                              window, averaged over the fringe
    :param accidentals: Accidental coincidences per port pair inside the window

    """

    visibility: float
    singles: Dict[str, float]
    true_coincidences: Dict[Tuple[str, str], float]
    accidentals: Dict[Tuple[str, str], float]

    def raw_visibility(self, analyzer_b: str = "b") -> float:
        """Fringe visibility expected before subtracting accidentals

        :param analyzer_b: Side-b analyzer whose port pairs with side a are combined
        :return: ``V₀ C / (C + A)`` summed over the port pairs

        """
        pairs = [pair for pair in self.true_coincidences if pair[1][:-1] == analyzer_b]
        true = math.fsum(self.true_coincidences[pair] for pair in pairs)
        accidental = math.fsum(self.accidentals[pair] for pair in pairs)
        return self.visibility * true / (true + accidental)


def expected_rates(scenario: ScenarioConfig) -> ExpectedRates:
    """Compute the rates a simulation of the scenario converges to

    Every photon leaving the source into a fiber is counted once whether its twin
    went the other way or followed it, so singles do not depend on the split
    fraction.

    :param scenario: The scenario
    :return: Singles, true and accidental coincidence rates

    """
    source = scenario.source
    window = scenario.coincidence.window
    route_share: Dict[str, float] = {"a": 1.0}
    for name, share in zip(
        side_analyzers(scenario, "b"), route_probabilities(scenario, "b")
    ):
        route_share[name] = share
    singles = {
        port.detector: scenario.detectors[port.detector].dark_rate
        + source.pair_rate
        * route_share[port.analyzer]
        * detection_probability(scenario, port.detector)
        / 2
        for port in scenario.ports
    }
    true_coincidences: Dict[Tuple[str, str], float] = {}
    accidentals: Dict[Tuple[str, str], float] = {}
    for port_a in (port for port in scenario.ports if port.side == "a"):
        for port_b in (port for port in scenario.ports if port.side == "b"):
            pair = (port_a.detector, port_b.detector)
            capture = window_capture(
                window,
                scenario.detectors[port_a.detector].timing_jitter_sigma,
                scenario.detectors[port_b.detector].timing_jitter_sigma,
            )
            true_coincidences[pair] = (
                source.pair_rate
                * source.split_fraction
                * route_share[port_b.analyzer]
                * detection_probability(scenario, port_a.detector)
                * detection_probability(scenario, port_b.detector)
                * capture
                / 8
            )
            accidentals[pair] = (
                singles[port_a.detector] * singles[port_b.detector] * window
            )
    return ExpectedRates(
        source.intrinsic_visibility, singles, true_coincidences, accidentals
    )


def _draw_routes(
    scenario: ScenarioConfig, side: str, count: int, rng: np.random.Generator
) -> np.ndarray:
    if side == "b" and isinstance(scenario.analyzer_b, PassiveChoice):
        return (rng.random(count) >= scenario.analyzer_b.coupler_split).astype(np.int8)
    return np.zeros(count, dtype=np.int8)


def _phases(
    scenario: ScenarioConfig, side: str, times: np.ndarray, routes: np.ndarray
) -> np.ndarray:
    phases = np.zeros(len(times))
    for route, name in enumerate(side_analyzers(scenario, side)):
        analyzer = scenario.analyzers[name]
        selected = routes == route
        phases[selected] = analyzer.phase + analyzer.phase_rate * times[selected]
    return phases


PhotonHits = Dict[str, Tuple[np.ndarray, np.ndarray]]


def propagate_photons(
    side: str,
    emission_times: np.ndarray,
    routes: np.ndarray,
    signs: np.ndarray,
    long_arm: np.ndarray,
    scenario: ScenarioConfig,
    rng: np.random.Generator,
    prethinned: float = 1.0,
) -> PhotonHits:
    """Carry photons of one side through fiber, analyzer and detector

    :param side: ``a`` or ``b``
    :param emission_times: Emission time of each photon
    :param routes: Index of the analyzer on this side each photon was routed to
    :param signs: Output port of each photon, +1 or -1
    :param long_arm: Whether each photon took the long arm
    :param scenario: The scenario
    :param rng: Random generator
    :param prethinned: Survival probability already applied by the caller; the
                       remaining acceptance is the detection probability divided by it
    :return: For each detector, indices of the detected photons and their arrival times

    """
    link = scenario.link_a if side == "a" else scenario.link_b
    duration = scenario.coincidence.integration_time
    accept = rng.random(len(emission_times))
    arrivals = emission_times + link.delay + long_arm * scenario.arm_imbalance_delay
    hits: PhotonHits = {}
    for route, name in enumerate(side_analyzers(scenario, side)):
        for sign in scenario.analyzers[name].ports:
            detector = f"{name}{sign}"
            acceptance = detection_probability(scenario, detector) / prethinned
            selected = np.flatnonzero(
                (routes == route) & (signs == PORT_SIGNS[sign]) & (accept < acceptance)
            )
            jitter = scenario.detectors[detector].timing_jitter_sigma
            times = arrivals[selected] + rng.normal(0.0, jitter, len(selected))
            inside = (times >= 0) & (times <= duration)
            hits[detector] = (selected[inside], times[inside])
    return hits


def propagate_pair(
    emission_time: float,
    outcome: Tuple[TimePeak, int, int],
    scenario: ScenarioConfig,
    rng: np.random.Generator,
    route_b: int = 0,
    both_long: bool = False,
) -> List[TimeTag]:
    """Propagate a single pair with a given outcome, mainly for inspection

    :param emission_time: Emission time in seconds
    :param outcome: Peak and port signs at a and b
    :param scenario: The scenario
    :param rng: Random generator
    :param route_b: Side-b analyzer index for a passive choice
    :param both_long: In the central peak, whether both photons took the long arms
    :return: Zero, one or two tags

    """
    peak, sign_a, sign_b = outcome
    if peak is TimePeak.CENTRAL:
        long_a = long_b = both_long
    else:
        long_a, long_b = peak is TimePeak.EARLY, peak is TimePeak.LATE
    provenance = Provenance(int(peak) + 1)
    tags = []
    for side, sign, long_arm, route in (
        ("a", sign_a, long_a, 0),
        ("b", sign_b, long_b, route_b),
    ):
        hits = propagate_photons(
            side,
            np.array([emission_time]),
            np.array([route]),
            np.array([sign]),
            np.array([long_arm]),
            scenario,
            rng,
        )
        for detector, (_, times) in hits.items():
            tags.extend(TimeTag(float(time), detector, provenance, 0) for time in times)
    return tags


@dataclass
class _TagCollector:
    duration: float
    parts: Dict[str, List[Tuple[np.ndarray, np.ndarray, np.ndarray]]] = field(
        default_factory=dict
    )

    def add(
        self, hits: PhotonHits, pair_ids: np.ndarray, provenance: np.ndarray
    ) -> None:
        for detector, (indices, times) in hits.items():
            self.parts.setdefault(detector, []).append(
                (times, provenance[indices].astype(np.int8), pair_ids[indices])
            )

    def add_stream(self, stream: TimeTagStream) -> None:
        self.parts.setdefault(stream.detector, []).append(
            (stream.times, stream.provenance, stream.pair_ids)
        )

    def streams(self, detectors: List[str]) -> Dict[str, TimeTagStream]:
        result = {}
        for detector in detectors:
            parts = self.parts.get(detector, [])
            if not parts:
                result[detector] = _empty_stream(detector, self.duration)
                continue
            times = np.concatenate([part[0] for part in parts])
            order = np.argsort(times, kind="stable")
            result[detector] = TimeTagStream(
                detector,
                times[order],
                np.concatenate([part[1] for part in parts])[order],
                np.concatenate([part[2] for part in parts])[order],
                self.duration,
            )
            logger.debug("%s: %d tags", detector, len(times))
        return result


def run_scenario(
    scenario: ScenarioConfig,
    seed: Optional[np.random.SeedSequence] = None,
    max_expected_tags: float = DEFAULT_MAX_EXPECTED_TAGS,
) -> Dict[str, TimeTagStream]:
    """Simulate one acquisition of the scenario

    :param scenario: The scenario; phase schedules are evaluated at emission times
    :param seed: Seed sequence to draw from, by default one built from
                 ``scenario.rng_seed``
    :param max_expected_tags: Refuse to run if more tags than this are expected
    :return: A sorted stream for every detector
    :raises ResourceLimitError: If the expected number of tags exceeds the cap

    """
    duration = scenario.coincidence.integration_time
    rates = expected_rates(scenario)
    expected_tags = math.fsum(rates.singles.values()) * duration
    if expected_tags > max_expected_tags:
        raise ResourceLimitError(
            f"Scenario would produce about {expected_tags:.3g} tags,"
            f" more than the limit of {max_expected_tags:.3g}"
        )
    rng = np.random.default_rng(
        seed if seed is not None else np.random.SeedSequence(scenario.rng_seed)
    )
    source = scenario.source
    ceiling = {side: _side_ceiling(scenario, side) for side in ("a", "b")}
    collector = _TagCollector(duration)
    next_pair_id = 0

    for survives in ((True, True), (True, False), (False, True)):
        rate = source.pair_rate * source.split_fraction
        for side, survived in zip(("a", "b"), survives):
            rate *= ceiling[side] if survived else 1 - ceiling[side]
        emissions = generate_pair_emissions(rate, duration, rng)
        count = len(emissions)
        if count == 0:
            continue
        pair_ids = np.arange(next_pair_id, next_pair_id + count, dtype=np.int64)
        next_pair_id += count
        routes = {
            "a": _draw_routes(scenario, "a", count, rng),
            "b": _draw_routes(scenario, "b", count, rng),
        }
        phase_sums = (
            _phases(scenario, "a", emissions, routes["a"])
            + _phases(scenario, "b", emissions, routes["b"])
            + source.phase_offset
        )
        peaks, signs_a, signs_b = sample_outcomes(
            phase_sums, source.intrinsic_visibility, rng
        )
        both_long = rng.random(count) < 0.5
        central = peaks == TimePeak.CENTRAL
        long_arm = {
            "a": np.where(central, both_long, peaks == TimePeak.EARLY),
            "b": np.where(central, both_long, peaks == TimePeak.LATE),
        }
        signs = {"a": signs_a, "b": signs_b}
        provenance = peaks + 1
        for side, survived in zip(("a", "b"), survives):
            if survived:
                hits = propagate_photons(
                    side,
                    emissions,
                    routes[side],
                    signs[side],
                    long_arm[side],
                    scenario,
                    rng,
                    prethinned=ceiling[side],
                )
                collector.add(hits, pair_ids, provenance)

    # pairs leaving the source through one fiber
    for side in ("a", "b"):
        survival = ceiling[side]
        unsplit = source.pair_rate * (1 - source.split_fraction) / 2
        rate = unsplit * (1 - (1 - survival) ** 2)
        emissions = generate_pair_emissions(rate, duration, rng)
        if len(emissions) == 0:
            continue
        count = len(emissions)
        pair_ids = np.arange(next_pair_id, next_pair_id + count, dtype=np.int64)
        next_pair_id += count
        both = rng.random(count) < survival / (2 - survival)
        times = np.concatenate([emissions, emissions[both]])
        photon_pair_ids = np.concatenate([pair_ids, pair_ids[both]])
        count = len(times)
        hits = propagate_photons(
            side,
            times,
            _draw_routes(scenario, side, count, rng),
            np.where(rng.random(count) < 0.5, 1, -1),
            rng.random(count) < 0.5,
            scenario,
            rng,
            prethinned=survival,
        )
        unpaired = np.full(count, Provenance.UNPAIRED, dtype=np.int8)
        collector.add(hits, photon_pair_ids, unpaired)

    for port in scenario.ports:
        collector.add_stream(
            generate_dark_counts(
                scenario.detectors[port.detector].dark_rate,
                duration,
                rng,
                port.detector,
            )
        )
    return collector.streams([port.detector for port in scenario.ports])


def dump_streams(streams: Dict[str, TimeTagStream], path: Path) -> None:
    """Write streams to a compressed ``.npz`` file

    Arrays: ``detectors`` (names), ``detector`` (index into names per tag),
    ``time_ps`` (int64 picoseconds), ``provenance`` (`Provenance` code),
    ``pair_id`` (int64) and ``duration`` (seconds).

    :param streams: Streams by detector
    :param path: Output file

    """
    names = sorted(streams)
    durations = {stream.duration for stream in streams.values()}
    np.savez_compressed(
        path,
        detectors=np.array(names),
        detector=np.concatenate(
            [
                np.full(len(streams[name]), index, dtype=np.int16)
                for index, name in enumerate(names)
            ]
        ),
        time_ps=np.concatenate(
            [
                np.rint(streams[name].times / PICOSECOND).astype(np.int64)
                for name in names
            ]
        ),
        provenance=np.concatenate([streams[name].provenance for name in names]),
        pair_id=np.concatenate([streams[name].pair_ids for name in names]),
        duration=np.array(max(durations)),
    )


def read_streams(path: Path) -> Dict[str, TimeTagStream]:
    """Read streams written by `dump_streams`

    :param path: The ``.npz`` file
    :return: Streams by detector

    """
    with np.load(path) as archive:
        names = [str(name) for name in archive["detectors"]]
        duration = float(archive["duration"])
        detector = archive["detector"]
        result = {}
        for index, name in enumerate(names):
            selected = detector == index
            result[name] = TimeTagStream(
                name,
                archive["time_ps"][selected] * PICOSECOND,
                archive["provenance"][selected].astype(np.int8),
                archive["pair_id"][selected],
                duration,
            )
    return result
