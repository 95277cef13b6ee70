"""Correlation coefficients, fringe fits and Bell parameters with their errors"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np
from scipy.stats import chi2

from franson_bell.coincidence import RatePair, RateQuad

logger = logging.getLogger(__name__)

RAW = "raw"
NET = "net"
FOUR_POINT = "four-point"
REDUCED = "reduced-3delta"
FROM_VISIBILITY = "from-visibility"
TWO_SQRT_2 = 2 * math.sqrt(2)
CONSISTENCY_P_VALUE = 0.001

Counts = TypeVar("Counts", RateQuad, RatePair)


class EmptyCountsError(ValueError):
    """Raised when a correlation coefficient is requested from zero coincidences"""


class MismatchedCountsError(ValueError):
    """Raised when combining counts taken with different windows or times"""


class InsufficientSpanError(ValueError):
    """Raised when fringe points do not cover enough of a period to fit"""


class SingularDesignError(ValueError):
    """Raised when the fringe fit's normal equations cannot be solved"""


class PhaseRatioError(ValueError):
    """Raised when points passed to `reduced_S` are not at Δ and 3Δ"""


@dataclass(frozen=True)
class CorrelationPoint:
    """Correlation coefficient measured at analyzer phases ``δ₁`` and ``δ₂``"""

    delta_1: float
    delta_2: float
    E: float
    sigma_E: float
    source: str = RAW

    def __post_init__(self) -> None:
        if not abs(self.E) <= 1 + 1e-12:
            raise ValueError(f"Correlation coefficient {self.E} outside [-1, 1]")
        if not self.sigma_E >= 0:
            raise ValueError(f"Negative standard error {self.sigma_E}")

    @property
    def phase_sum(self) -> float:
        return self.delta_1 + self.delta_2


@dataclass(frozen=True)
class FringeFit:
    """Sinusoid ``E = V cos(Δ + φ₀)`` fitted to correlation points"""

    visibility: float
    phase_offset: float
    sigma_visibility: float
    sigma_phase_offset: float
    chi2_per_dof: float
    points: int

    def predict(self, phase_sum: float) -> float:
        return self.visibility * math.cos(phase_sum + self.phase_offset)


@dataclass(frozen=True)
class BellResult:
    """A Bell parameter, how it was obtained, and the points it rests on

    :param points: Indices of the scan points used, empty for fit-based results

    """

    S: float
    sigma_S: float
    mode: str
    variant: str
    points: Tuple[int, ...] = ()

    @property
    def n_sigma(self) -> Optional[float]:
        """Standard deviations by which ``S`` exceeds the local bound 2"""
        if self.sigma_S == 0:
            return None
        return (self.S - 2) / self.sigma_S

    @property
    def violates(self) -> bool:
        return self.S > 2


def _two_outcome(
    agree: float,
    disagree: float,
    delta_1: float,
    delta_2: float,
    source: str,
    variances: Optional[Tuple[float, float]] = None,
) -> CorrelationPoint:
    total = agree + disagree
    if total <= 0:
        raise EmptyCountsError(
            "No coincidences to compute a correlation coefficient from"
        )
    var_agree, var_disagree = (agree, disagree) if variances is None else variances
    return CorrelationPoint(
        delta_1,
        delta_2,
        (agree - disagree) / total,
        2 * math.sqrt(disagree**2 * var_agree + agree**2 * var_disagree) / total**2,
        source,
    )


def correlation(
    q: RateQuad, delta_1: float = 0.0, delta_2: float = 0.0
) -> CorrelationPoint:
    """Correlation coefficient of four coincidence counts

    ``E = (R₊₊ - R₊₋ - R₋₊ + R₋₋) / ΣR``. With ``A = R₊₊ + R₋₋``
    and ``B = R₊₋ + R₋₊`` Poisson propagation gives ``σ = 2 √(A B / (A + B)³)``.

    :param q: The counts
    :param delta_1: Phase of analyzer a the counts were taken at
    :param delta_2: Phase of analyzer b the counts were taken at
    :return: The point, marked net if the counts are
    :raises EmptyCountsError: If all counts are zero

    """
    source = NET if q.net else RAW
    return _two_outcome(q.pp + q.mm, q.pm + q.mp, delta_1, delta_2, source)


def reconstruct_E_symmetric(
    R_plus_plus: float,
    R_minus_plus: float,
    delta_1: float = 0.0,
    delta_2: float = 0.0,
    source: str = RAW,
) -> CorrelationPoint:
    """Correlation coefficient from the two counts seen by a single-detector analyzer

    Assuming ``R₊₊ = R₋₋`` and ``R₊₋ = R₋₊`` the coefficient reduces to
    ``(R₊₊ - R₋₊) / (R₊₊ + R₋₊)``, with binomial error propagation.

    :raises EmptyCountsError: If both counts are zero

    """
    if R_plus_plus < 0 or R_minus_plus < 0:
        raise ValueError("Coincidence counts must not be negative")
    return _two_outcome(R_plus_plus, R_minus_plus, delta_1, delta_2, source)


def correlate(
    counts: Union[RateQuad, RatePair], delta_1: float = 0.0, delta_2: float = 0.0
) -> CorrelationPoint:
    """Correlation coefficient of either kind of counts"""
    if isinstance(counts, RateQuad):
        return correlation(counts, delta_1, delta_2)
    return reconstruct_E_symmetric(
        counts.pp, counts.mp, delta_1, delta_2, NET if counts.net else RAW
    )


def _check_compatible(first: Counts, second: Counts, what: str) -> None:
    if type(first) is not type(second):
        raise MismatchedCountsError(
            f"Cannot combine {type(first).__name__} with {type(second).__name__}"
        )
    if not math.isclose(first.window, second.window, rel_tol=1e-9):
        raise MismatchedCountsError(
            f"{what} window {second.window:.4e} s differs from {first.window:.4e} s"
        )


def subtract_accidentals(q: Counts, accidentals: Counts) -> Counts:
    """Remove accidental coincidences port pair by port pair

    :param q: Counts in the coincidence window
    :param accidentals: Expected accidentals for the same window and time
    :return: The difference, floored at zero and marked net
    :raises MismatchedCountsError: If window, integration time or shape differ

    """
    _check_compatible(q, accidentals, "Accidental")
    if not math.isclose(q.integration_time, accidentals.integration_time, rel_tol=1e-9):
        raise MismatchedCountsError(
            f"Accidentals integrated over {accidentals.integration_time} s,"
            f" counts over {q.integration_time} s"
        )
    return q.with_counts(
        [
            max(0.0, count - accidental)
            for count, accidental in zip(q.counts, accidentals.counts)
        ],
        net=True,
    )


def pool_accidentals(measurements: Sequence[Counts], integration_time: float) -> Counts:
    """Average displaced-window measurements and scale them to one integration time

    :param measurements: Accidental counts of several acquisitions
    :param integration_time: Time to scale the pooled rate to
    :return: Expected accidental counts per port pair
    :raises EmptyCountsError: If there are no measurements

    """
    if not measurements:
        raise EmptyCountsError("No accidental measurements to pool")
    first = measurements[0]
    for measurement in measurements[1:]:
        _check_compatible(first, measurement, "Accidental")
    total_time = math.fsum(measurement.integration_time for measurement in measurements)
    scale = integration_time / total_time
    pooled = [
        scale * math.fsum(measurement.counts[index] for measurement in measurements)
        for index in range(len(first.counts))
    ]
    return replace(
        first.with_counts(pooled, net=False), integration_time=integration_time
    )


def pool_variances(
    measurements: Sequence[Counts], integration_time: float
) -> Tuple[float, ...]:
    """Variance of each count `pool_accidentals` returns for the same arguments

    A pooled count is a sum of Poisson counts times ``integration_time / ΣT``, so
    its variance is the pooled count times that scale.

    """
    pooled = pool_accidentals(measurements, integration_time)
    total_time = math.fsum(measurement.integration_time for measurement in measurements)
    return tuple(count * integration_time / total_time for count in pooled.counts)


def correlate_net(
    raw: Counts,
    accidentals: Counts,
    accidental_variances: Sequence[float],
    delta_1: float = 0.0,
    delta_2: float = 0.0,
) -> CorrelationPoint:
    """Correlation coefficient of counts after subtracting accidentals

    The net counts are not Poisson: each has the variance of its raw count plus
    that of the subtracted accidental estimate, and the error is propagated from
    those.

    :param raw: Counts in the coincidence window
    :param accidentals: Expected accidentals for the same window and time
    :param accidental_variances: Variance of each expected accidental count
    :return: The net point
    :raises EmptyCountsError: If nothing is left after subtraction
    :raises MismatchedCountsError: If window, integration time or shape differ

    """
    net = subtract_accidentals(raw, accidentals)
    variances = [
        count + variance for count, variance in zip(raw.counts, accidental_variances)
    ]
    if isinstance(net, RateQuad):
        return _two_outcome(
            net.pp + net.mm,
            net.pm + net.mp,
            delta_1,
            delta_2,
            NET,
            (variances[0] + variances[3], variances[1] + variances[2]),
        )
    return _two_outcome(
        net.pp, net.mp, delta_1, delta_2, NET, (variances[0], variances[1])
    )


def _phase_coverage(phases: np.ndarray) -> float:
    """Length of the shortest arc of the circle holding all phases"""
    ordered = np.sort(np.mod(phases, 2 * math.pi))
    gaps = np.diff(np.concatenate([ordered, [ordered[0] + 2 * math.pi]]))
    return 2 * math.pi - float(gaps.max())


def fit_fringe(points: Sequence[CorrelationPoint]) -> FringeFit:
    """Fit ``E = V cos(Δ + φ₀)`` to points with ``Δ = δ₁ + δ₂``

    The model is linear as ``a cos Δ + b sin Δ``. If every point has a positive
    standard error the fit is weighted and errors are absolute; otherwise it is
    unweighted and errors come from the residual scatter.

    :param points: At least four points spanning half a period of Δ
    :return: The visibility and phase offset with standard errors
    :raises InsufficientSpanError: With too few points or too narrow a span
    :raises SingularDesignError: If the normal equations are singular

    """
    if len(points) < 4:
        raise InsufficientSpanError(f"Fringe fit needs four points, got {len(points)}")
    phases = np.array([point.phase_sum for point in points])
    if _phase_coverage(phases) < math.pi - 1e-9:
        raise InsufficientSpanError("Fringe points span less than half a period")
    values = np.array([point.E for point in points])
    sigmas = np.array([point.sigma_E for point in points])
    weighted = bool(np.all(sigmas > 0))
    weights = 1 / sigmas**2 if weighted else np.ones(len(points))
    design = np.column_stack([np.cos(phases), np.sin(phases)])
    normal = design.T @ (design * weights[:, None])
    if np.linalg.cond(normal) > 1e12:
        raise SingularDesignError("Fringe points do not determine both quadratures")
    covariance = np.linalg.inv(normal)
    a, b = covariance @ (design.T @ (weights * values))
    residuals = values - design @ np.array([a, b])
    dof = len(points) - 2
    chi2_per_dof = float(np.sum(weights * residuals**2) / dof)
    if not weighted:
        covariance = covariance * chi2_per_dof
    visibility = math.hypot(a, b)
    if visibility > 0:
        gradient = np.array([a, b]) / visibility
        phase_gradient = np.array([b, -a]) / visibility**2
        sigma_visibility = math.sqrt(max(0.0, gradient @ covariance @ gradient))
        sigma_phase = math.sqrt(max(0.0, phase_gradient @ covariance @ phase_gradient))
    else:
        sigma_visibility = math.sqrt(max(0.0, float(np.trace(covariance)) / 2))
        sigma_phase = math.pi
    return FringeFit(
        visibility=visibility,
        phase_offset=math.atan2(-b, a),
        sigma_visibility=sigma_visibility,
        sigma_phase_offset=sigma_phase,
        chi2_per_dof=chi2_per_dof,
        points=len(points),
    )


def chsh(
    E11: CorrelationPoint,
    E12: CorrelationPoint,
    E21: CorrelationPoint,
    E22: CorrelationPoint,
    indices: Tuple[int, ...] = (),
) -> BellResult:
    """CHSH parameter ``|E(d₁,d₂) + E(d₁,d₂′) + E(d₁′,d₂) - E(d₁′,d₂′)|``

    The same point object may fill two terms. It then counts as one measurement
    with the coefficients summed.

    :param indices: Scan point indices to record in the result
    :return: The four-point Bell parameter, variant taken from the first point

    """
    coefficients: Dict[int, Tuple[CorrelationPoint, int]] = {}
    for point, sign in ((E11, 1), (E12, 1), (E21, 1), (E22, -1)):
        previous = coefficients.get(id(point), (point, 0))[1]
        coefficients[id(point)] = (point, previous + sign)
    S = abs(E11.E + E12.E + E21.E - E22.E)
    sigma = math.sqrt(
        math.fsum((sign * point.sigma_E) ** 2 for point, sign in coefficients.values())
    )
    return BellResult(S, sigma, FOUR_POINT, E11.source, indices)


def reduced_S(
    E_at_delta: CorrelationPoint,
    E_at_3delta: CorrelationPoint,
    indices: Tuple[int, ...] = (),
    tolerance: float = 1e-6,
) -> BellResult:
    """Bell parameter ``|3 E(Δ) - E(3Δ)|`` for a symmetric choice of settings

    :raises PhaseRatioError: If the second phase sum is not three times the first
                             modulo a full turn

    """
    mismatch = math.remainder(
        E_at_3delta.phase_sum - 3 * E_at_delta.phase_sum, 2 * math.pi
    )
    if abs(mismatch) > tolerance:
        raise PhaseRatioError(
            f"Phase sum {E_at_3delta.phase_sum:.6f} is not three times"
            f" {E_at_delta.phase_sum:.6f}"
        )
    return BellResult(
        abs(3 * E_at_delta.E - E_at_3delta.E),
        math.sqrt(9 * E_at_delta.sigma_E**2 + E_at_3delta.sigma_E**2),
        REDUCED,
        E_at_delta.source,
        indices,
    )


def from_visibility(fit: FringeFit, variant: str = RAW) -> BellResult:
    """Bell parameter at optimal settings, ``S = 2√2 V``"""
    return BellResult(
        fit.visibility * TWO_SQRT_2,
        fit.sigma_visibility * TWO_SQRT_2,
        FROM_VISIBILITY,
        variant,
    )


def qber(visibility: float) -> float:
    """Quantum bit error rate of a key distilled from fringes of this visibility

    :raises ValueError: If the visibility is outside [0, 1]

    """
    if not 0 <= visibility <= 1:
        raise ValueError(f"Visibility must be in [0, 1], got {visibility!r}")
    return (1 - visibility) / 2


def bell_qber_threshold() -> float:
    """QBER at which the fringe visibility drops to ``1/√2``"""
    return (1 - 1 / math.sqrt(2)) / 2


def violates_bell(error_rate: float) -> bool:
    return error_rate < bell_qber_threshold()


@dataclass(frozen=True)
class SinglesConsistency:
    """χ² test of a constant count rate across acquisitions"""

    chi2: float
    dof: int
    p_value: float

    @property
    def consistent(self) -> bool:
        return self.p_value > CONSISTENCY_P_VALUE


def singles_consistency(
    counts: Sequence[int], times: Sequence[float]
) -> SinglesConsistency:
    """Test whether counts in acquisitions of given lengths share one rate

    :param counts: Number of counts of each acquisition
    :param times: Length of each acquisition in seconds
    :return: χ² statistic, degrees of freedom and p-value

    """
    if len(counts) != len(times):
        raise ValueError("Counts and times must have the same length")
    if len(counts) < 2 or sum(counts) == 0:
        return SinglesConsistency(0.0, max(0, len(counts) - 1), 1.0)
    observed = np.asarray(counts, dtype=float)
    durations = np.asarray(times, dtype=float)
    expected = observed.sum() / durations.sum() * durations
    statistic = float(np.sum((observed - expected) ** 2 / expected))
    dof = len(counts) - 1
    return SinglesConsistency(statistic, dof, float(chi2.sf(statistic, dof)))
