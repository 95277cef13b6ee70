"""Closed-form two-photon predictions for a pair of unbalanced interferometers

Each photon of an energy-time entangled pair takes the short or the long arm of
its analyzer. The short-short and long-long alternatives arrive with the same
time difference and interfere; the two mixed alternatives arrive ``ΔT`` earlier
or later and do not. With 50/50 splitters the joint probabilities are

- central peak: ``(1 + i j V cos(δ1 + δ2 + φ0)) / 8`` for ports ``i, j = ±1``
- each satellite peak: ``1/16`` per port pair

"""

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Tuple

import numpy as np

SATELLITE_PROBABILITY = 1 / 16


class PortSign(IntEnum):
    """Analyzer output port, ``+`` being the direct port"""

    PLUS = 1
    MINUS = -1

    @property
    def label(self) -> str:
        return "+" if self is PortSign.PLUS else "-"


class TimePeak(IntEnum):
    """Arrival-time-difference peak of a detected pair"""

    CENTRAL = 0
    # analyzer a long arm, analyzer b short arm
    EARLY = 1
    # analyzer a short arm, analyzer b long arm
    LATE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


Outcome = Tuple[TimePeak, PortSign, PortSign]
OUTCOMES: Tuple[Outcome, ...] = tuple(
    (peak, i, j) for peak in TimePeak for i in PortSign for j in PortSign
)


def _check_visibility(visibility: float) -> None:
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"Visibility must be in [0, 1], got {visibility!r}")


def central_peak_prob(
    i: PortSign,
    j: PortSign,
    delta_1: float,
    delta_2: float,
    visibility: float,
    phase_offset: float = 0.0,
) -> float:
    """Probability that a pair lands in the central peak at ports ``i`` and ``j``

    :param i: Port of analyzer a
    :param j: Port of analyzer b
    :param delta_1: Phase of analyzer a in radians
    :param delta_2: Phase of analyzer b in radians
    :param visibility: Intrinsic two-photon visibility V₀
    :param phase_offset: Global phase offset φ₀ in radians
    :return: The joint probability; the four port pairs sum to 1/2
    :raises ValueError: If the visibility is outside [0, 1]

    """
    _check_visibility(visibility)
    phase_sum = delta_1 + delta_2 + phase_offset
    return (1 + int(i) * int(j) * visibility * math.cos(phase_sum)) / 8


def predicted_E(
    delta_1: float, delta_2: float, visibility: float, phase_offset: float = 0.0
) -> float:
    """Correlation coefficient of the central peak, ``V₀ cos(δ1 + δ2 + φ0)``"""
    _check_visibility(visibility)
    return visibility * math.cos(delta_1 + delta_2 + phase_offset)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Categorical distribution over (peak, port a, port b) for one photon pair"""

    probabilities: Dict[Outcome, float]
    delta_1: float
    delta_2: float
    visibility: float
    phase_offset: float

    @property
    def total(self) -> float:
        return math.fsum(self.probabilities.values())

    def correlation(self) -> float:
        """Apply the correlation coefficient formula to the central-peak block"""
        block = {
            (i, j): p
            for (peak, i, j), p in self.probabilities.items()
            if peak is TimePeak.CENTRAL
        }
        signed = math.fsum(int(i) * int(j) * p for (i, j), p in block.items())
        return signed / math.fsum(block.values())


def outcome_distribution(
    delta_1: float, delta_2: float, visibility: float, phase_offset: float = 0.0
) -> OutcomeDistribution:
    """Joint outcome distribution of one pair for the given analyzer phases

    :param delta_1: Phase of analyzer a in radians
    :param delta_2: Phase of analyzer b in radians
    :param visibility: Intrinsic two-photon visibility V₀
    :param phase_offset: Global phase offset φ₀ in radians
    :return: The distribution over all twelve outcomes
    :raises ValueError: If the visibility is outside [0, 1]

    """
    probabilities = {
        (peak, i, j): (
            central_peak_prob(i, j, delta_1, delta_2, visibility, phase_offset)
            if peak is TimePeak.CENTRAL
            else SATELLITE_PROBABILITY
        )
        for peak, i, j in OUTCOMES
    }
    return OutcomeDistribution(
        probabilities, delta_1, delta_2, visibility, phase_offset
    )


def sample_outcomes(
    phase_sums: np.ndarray, visibility: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw one outcome per pair for the given total phases

    The peak is drawn first (central 1/2, each satellite 1/4), then the port of
    analyzer a uniformly, then whether analyzer b agrees with it, which in the
    central peak happens with probability ``(1 + V cos Δ) / 2``.

    :param phase_sums: ``δ1 + δ2 + φ0`` for each pair
    :param visibility: Intrinsic two-photon visibility V₀
    :param rng: Random generator
    :return: Peak codes, port signs at a and port signs at b as arrays
    :raises ValueError: If the visibility is outside [0, 1]

    """
    _check_visibility(visibility)
    count = len(phase_sums)
    peaks = rng.choice(
        np.array([TimePeak.CENTRAL, TimePeak.EARLY, TimePeak.LATE], dtype=np.int8),
        size=count,
        p=[0.5, 0.25, 0.25],
    )
    signs_a = np.where(rng.random(count) < 0.5, 1, -1).astype(np.int8)
    agree_probability = np.where(
        peaks == TimePeak.CENTRAL, (1 + visibility * np.cos(phase_sums)) / 2, 0.5
    )
    agree = rng.random(count) < agree_probability
    signs_b = np.where(agree, signs_a, -signs_a).astype(np.int8)
    return peaks, signs_a, signs_b
