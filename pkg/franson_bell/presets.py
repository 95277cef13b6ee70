"""Built-in scenarios modelled on a Franson experiment over 10.9 km of installed fiber

The source and losses of the ``geneva1998`` preset are not measured quantities but
solved from the reported count rates: singles of 39.5 kHz per detector of which
26 kHz are dark counts, a raw fringe visibility of 0.853 and a net visibility of
0.955 in a 550 ps window.

"""

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict

from franson_bell.montecarlo import expected_rates, window_capture
from franson_bell.scenario import (
    DEFAULT_JITTER,
    DEFAULT_WINDOW,
    CoincidenceParams,
    DetectorParams,
    FiberLink,
    InterferometerParams,
    PassiveChoice,
    ScenarioConfig,
    SourceParams,
)

SINGLES_RATE = 39.5e3
DARK_RATE = 26e3
RAW_VISIBILITY = 0.853
VISIBILITY = 0.955
LINK_A_LENGTH = 8.1
LINK_B_LENGTH = 9.3
INSERTION_LOSS = 2.0
COUPLER_EXCESS_LOSS = 0.3
EXP2_VISIBILITY = 0.97
EXP2_RAW_VISIBILITY = 0.795
SEED = 1


@dataclass(frozen=True)
class Calibration:
    """Solution of the count-rate equations for a symmetric two-sided setup

    Rates are per detector or per port pair, in Hz.

    """

    singles_rate: float
    dark_rate: float
    accidental_rate: float
    true_coincidence_rate: float
    window_capture: float
    detection_probability: float
    pair_rate: float

    @property
    def photon_singles_rate(self) -> float:
        return self.singles_rate - self.dark_rate


def solve_calibration(
    singles_rate: float = SINGLES_RATE,
    dark_rate: float = DARK_RATE,
    raw_visibility: float = RAW_VISIBILITY,
    visibility: float = VISIBILITY,
    window: float = DEFAULT_WINDOW,
    jitter: float = DEFAULT_JITTER,
    split_fraction: float = 0.5,
) -> Calibration:
    """Find the pair rate and detection probability behind observed count rates

    The accidental rate per port pair is ``r² w``. The raw visibility
    ``V₀ C / (C + A)`` then fixes the true coincidence rate ``C``. With ``P``
    photon singles per detector and detection probability ``η`` per photon,
    ``P = R η / 2`` and ``C = R s η² c / 8`` where ``c`` is the part of the
    central peak inside the window, so ``η = 4 C / (P s c)``.

    :param singles_rate: Total count rate per detector in Hz
    :param dark_rate: Dark count rate per detector in Hz
    :param raw_visibility: Fringe visibility before accidental subtraction
    :param visibility: Intrinsic visibility V₀
    :param window: Full coincidence window width in seconds
    :param jitter: Timing jitter of each detector in seconds
    :param split_fraction: Fraction of pairs split into the two fibers
    :return: The solved rates
    :raises ValueError: If the targets have no physical solution

    """
    if not 0 < raw_visibility < visibility <= 1:
        raise ValueError("Raw visibility must be positive and below the intrinsic one")
    photon_singles = singles_rate - dark_rate
    if photon_singles <= 0:
        raise ValueError("Singles rate must exceed the dark count rate")
    accidental_rate = singles_rate**2 * window
    true_rate = accidental_rate * raw_visibility / (visibility - raw_visibility)
    capture = window_capture(window, jitter, jitter)
    detection_probability = 4 * true_rate / (photon_singles * split_fraction * capture)
    if not 0 < detection_probability <= 1:
        raise ValueError(
            f"Detection probability {detection_probability:.3g} is not physical"
        )
    return Calibration(
        singles_rate=singles_rate,
        dark_rate=dark_rate,
        accidental_rate=accidental_rate,
        true_coincidence_rate=true_rate,
        window_capture=capture,
        detection_probability=detection_probability,
        pair_rate=2 * photon_singles / detection_probability,
    )


def _detector(
    calibration: Calibration, link: FiberLink, extra_survival: float = 1.0
) -> DetectorParams:
    # the efficiency absorbs whatever loss the fiber and analyzer don't explain
    survival = link.survival * 10 ** (-INSERTION_LOSS / 10) * extra_survival
    return DetectorParams(
        efficiency=calibration.detection_probability / survival,
        dark_rate=calibration.dark_rate,
        timing_jitter_sigma=DEFAULT_JITTER,
    )


def calibrate_preset() -> ScenarioConfig:
    """Build the ``geneva1998`` scenario: two two-channel analyzers 10.9 km apart"""
    calibration = solve_calibration()
    link_a = FiberLink(length=LINK_A_LENGTH)
    link_b = FiberLink(length=LINK_B_LENGTH)
    analyzer = InterferometerParams(insertion_loss=INSERTION_LOSS)
    detector_a = _detector(calibration, link_a)
    detector_b = _detector(calibration, link_b)
    return ScenarioConfig(
        source=SourceParams(
            pair_rate=calibration.pair_rate, intrinsic_visibility=VISIBILITY
        ),
        link_a=link_a,
        link_b=link_b,
        analyzer_a=analyzer,
        analyzer_b=analyzer,
        detectors={
            "a+": detector_a,
            "a-": detector_a,
            "b+": detector_b,
            "b-": detector_b,
        },
        coincidence=CoincidenceParams(),
        rng_seed=SEED,
    )


def geneva1998_exp2() -> ScenarioConfig:
    """Build the ``geneva1998-exp2`` scenario with a passive choice on side b

    Side a and the fibers are those of ``geneva1998``. A 50/50 coupler with
    0.3 dB excess loss routes side-b photons to two single-channel analyzers at
    phases 0 and -π/2, each with the detector efficiency of side b. The second
    measurement reported fringes of about 96 % net and 78 % raw visibility: the
    source visibility is 0.97, and the side-b dark rate is solved so that the raw
    visibility is 0.795. The expected Bell parameters ``2√2 V`` are then 2.74 net
    and 2.25 raw.

    """
    base = calibrate_preset()
    choice = PassiveChoice(
        b1=InterferometerParams(
            phase=0.0, insertion_loss=INSERTION_LOSS, two_channel=False
        ),
        b2=InterferometerParams(
            phase=-math.pi / 2, insertion_loss=INSERTION_LOSS, two_channel=False
        ),
        coupler_split=0.5,
        coupler_excess_loss=COUPLER_EXCESS_LOSS,
    )
    scenario = ScenarioConfig(
        source=replace(base.source, intrinsic_visibility=EXP2_VISIBILITY),
        link_a=base.link_a,
        link_b=base.link_b,
        analyzer_a=base.analyzer_a,
        analyzer_b=choice,
        detectors={
            "a+": base.detectors["a+"],
            "a-": base.detectors["a-"],
            "b1+": base.detectors["b+"],
            "b2+": base.detectors["b+"],
        },
        coincidence=base.coincidence,
        rng_seed=base.rng_seed,
    )
    detector = replace(
        base.detectors["b+"],
        dark_rate=solve_dark_rate(scenario, "b1+", EXP2_RAW_VISIBILITY),
    )
    return replace(
        scenario, detectors={**scenario.detectors, "b1+": detector, "b2+": detector}
    )


def solve_dark_rate(
    scenario: ScenarioConfig, detector: str, raw_visibility: float
) -> float:
    """Dark rate of a side-b detector that gives its fringe the raw visibility

    Accidentals ``A = r_a r_b w`` must equal ``C (V₀ / V_raw - 1)`` for the true
    coincidence rate ``C`` of the port pair with ``a+``.

    :param scenario: The scenario; every other rate is taken from it
    :param detector: The side-b detector to solve for
    :param raw_visibility: Target raw visibility
    :return: The dark count rate in Hz
    :raises ValueError: If the target needs a negative dark rate

    """
    rates = expected_rates(scenario)
    photon_singles = rates.singles[detector] - scenario.detectors[detector].dark_rate
    accidental_rate = rates.true_coincidences[("a+", detector)] * (
        rates.visibility / raw_visibility - 1
    )
    singles = accidental_rate / (rates.singles["a+"] * scenario.coincidence.window)
    if not singles >= photon_singles:
        raise ValueError(
            f"Raw visibility {raw_visibility} needs fewer accidentals than photons give"
        )
    return singles - photon_singles


PRESETS: Dict[str, Callable[[], ScenarioConfig]] = {
    "geneva1998": calibrate_preset,
    "geneva1998-exp2": geneva1998_exp2,
}
