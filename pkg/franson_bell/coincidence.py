"""Windowed coincidence counting between time-tag streams

The corrected time difference of a tag pair is ``t_a - t_b - link_offset -
offset``. A pair is coincident when that difference is within half the window
width of zero, so ``window`` is the full width.

"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from franson_bell.montecarlo import TimeTagStream

logger = logging.getLogger(__name__)

DEFAULT_SEARCH_RANGE = 100e-9
DEFAULT_MIN_SIGNIFICANCE = 5.0


class UnsortedStreamError(ValueError):
    """Raised when a time-tag stream is not in ascending time order"""


class OffsetTooSmallError(ValueError):
    """Raised when a displaced window would still overlap the coincidence peaks"""


class CoincidenceCounts:
    """Behaviour shared by coincidence count records

    Raw counts are integers. Counts with accidentals subtracted are marked ``net``
    and may be fractional.

    """

    integration_time: float
    window: float
    offset: float
    net: bool

    @property
    def counts(self) -> Tuple[float, ...]:
        raise NotImplementedError

    @property
    def total(self) -> float:
        return math.fsum(self.counts)

    def _validate(self) -> None:
        if any(count < 0 for count in self.counts):
            raise ValueError(f"Negative coincidence count in {self.counts}")
        if not self.window > 0:
            raise ValueError(f"Coincidence window must be positive, got {self.window}")
        if not self.integration_time >= 0:
            raise ValueError(
                f"Integration time must not be negative, got {self.integration_time}"
            )


@dataclass(frozen=True)
class RateQuad(CoincidenceCounts):
    """Coincidences between the two ports of each side: R₊₊, R₊₋, R₋₊ and R₋₋"""

    pp: float
    pm: float
    mp: float
    mm: float
    integration_time: float
    window: float
    offset: float = 0.0
    net: bool = False

    def __post_init__(self) -> None:
        self._validate()

    @property
    def counts(self) -> Tuple[float, float, float, float]:
        return (self.pp, self.pm, self.mp, self.mm)

    def with_counts(self, counts: Sequence[float], net: bool) -> "RateQuad":
        pp, pm, mp, mm = counts
        return replace(self, pp=pp, pm=pm, mp=mp, mm=mm, net=net)


@dataclass(frozen=True)
class RatePair(CoincidenceCounts):
    """Coincidences of both side-a ports with a single-detector analyzer: R₊₊ and R₋₊"""

    pp: float
    mp: float
    integration_time: float
    window: float
    offset: float = 0.0
    net: bool = False

    def __post_init__(self) -> None:
        self._validate()

    @property
    def counts(self) -> Tuple[float, float]:
        return (self.pp, self.mp)

    def with_counts(self, counts: Sequence[float], net: bool) -> "RatePair":
        pp, mp = counts
        return replace(self, pp=pp, mp=mp, net=net)


def _check_sorted(stream: TimeTagStream) -> None:
    if not stream.is_sorted():
        raise UnsortedStreamError(
            f"Time tags of detector {stream.detector} are not sorted"
        )


def _candidate_ranges(
    times_a: np.ndarray, times_b: np.ndarray, shift: float, half_width: float
) -> Tuple[np.ndarray, np.ndarray]:
    """For each tag of a, the range of tags of b within ``half_width`` after shifting"""
    low = np.searchsorted(times_b, times_a - shift - half_width, side="left")
    high = np.searchsorted(times_b, times_a - shift + half_width, side="right")
    return low, high


def match_coincidences(
    stream_a: TimeTagStream, stream_b: TimeTagStream, window: float, shift: float
) -> List[Tuple[int, int]]:
    """Pair tags one-to-one, each tag of a taking the earliest unused tag of b in range

    :param stream_a: Tags of a side-a detector
    :param stream_b: Tags of a side-b detector
    :param window: Full window width in seconds
    :param shift: Expected ``t_a - t_b`` of a coincident pair
    :return: Index pairs into the two streams, in time order of a
    :raises UnsortedStreamError: If either stream is not sorted

    """
    _check_sorted(stream_a)
    _check_sorted(stream_b)
    low, high = _candidate_ranges(stream_a.times, stream_b.times, shift, window / 2)
    matches = []
    last = -1
    # the ranges only move forward, so "unused" means "after the last match"
    for index in np.flatnonzero(high > low):
        candidate = max(int(low[index]), last + 1)
        if candidate < high[index]:
            matches.append((int(index), candidate))
            last = candidate
    return matches


def count_pair(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    window: float,
    offset: float = 0.0,
    link_offset: float = 0.0,
) -> int:
    """Count coincidences between two detectors"""
    return len(match_coincidences(stream_a, stream_b, window, link_offset + offset))


def count_coincidences(
    streams_a: Tuple[TimeTagStream, TimeTagStream],
    streams_b: Tuple[TimeTagStream, TimeTagStream],
    window: float,
    offset: float = 0.0,
    link_offset: float = 0.0,
) -> RateQuad:
    """Count coincidences for all four port pairs of two two-channel analyzers

    :param streams_a: Streams of the ``+`` and ``-`` detectors of side a
    :param streams_b: Streams of the ``+`` and ``-`` detectors of side b
    :param window: Full window width in seconds
    :param offset: Extra displacement of the window, zero for the true peak
    :param link_offset: Arrival-time difference caused by the fibers
    :return: The four counts
    :raises UnsortedStreamError: If any stream is not sorted

    """
    if not window > 0:
        raise ValueError(f"Coincidence window must be positive, got {window}")
    plus_a, minus_a = streams_a
    plus_b, minus_b = streams_b
    return RateQuad(
        pp=count_pair(plus_a, plus_b, window, offset, link_offset),
        pm=count_pair(plus_a, minus_b, window, offset, link_offset),
        mp=count_pair(minus_a, plus_b, window, offset, link_offset),
        mm=count_pair(minus_a, minus_b, window, offset, link_offset),
        integration_time=plus_a.duration,
        window=window,
        offset=offset,
    )


def count_rate_pair(
    streams_a: Tuple[TimeTagStream, TimeTagStream],
    stream_b: TimeTagStream,
    window: float,
    offset: float = 0.0,
    link_offset: float = 0.0,
) -> RatePair:
    """Count coincidences of both side-a ports with one side-b detector"""
    if not window > 0:
        raise ValueError(f"Coincidence window must be positive, got {window}")
    plus_a, minus_a = streams_a
    return RatePair(
        pp=count_pair(plus_a, stream_b, window, offset, link_offset),
        mp=count_pair(minus_a, stream_b, window, offset, link_offset),
        integration_time=plus_a.duration,
        window=window,
        offset=offset,
    )


def estimate_accidentals_analytic(
    rate_a: float, rate_b: float, window: float, integration_time: float
) -> float:
    """Expected accidental coincidences of two uncorrelated Poisson streams

    :param rate_a: Count rate of the side-a detector in Hz
    :param rate_b: Count rate of the side-b detector in Hz
    :param window: Full window width in seconds
    :param integration_time: Acquisition time in seconds
    :return: ``rate_a * rate_b * window * integration_time``

    """
    if min(rate_a, rate_b, window, integration_time) < 0:
        raise ValueError("Rates, window and integration time must not be negative")
    return rate_a * rate_b * window * integration_time


def _check_offset(far_offset: float, window: float, arm_imbalance_delay: float) -> None:
    if not abs(far_offset) > arm_imbalance_delay + window:
        raise OffsetTooSmallError(
            f"Accidental window offset {far_offset:.3e} s overlaps the satellite peaks;"
            f" it must exceed {arm_imbalance_delay + window:.3e} s"
        )


def measure_accidentals(
    streams_a: Tuple[TimeTagStream, TimeTagStream],
    streams_b: Tuple[TimeTagStream, TimeTagStream],
    window: float,
    far_offset: float,
    arm_imbalance_delay: float,
    link_offset: float = 0.0,
) -> RateQuad:
    """Count coincidences in a window displaced away from all peaks

    :raises OffsetTooSmallError: If ``far_offset`` does not exceed
                                 ``arm_imbalance_delay + window``

    """
    _check_offset(far_offset, window, arm_imbalance_delay)
    return count_coincidences(streams_a, streams_b, window, far_offset, link_offset)


def measure_accidentals_pair(
    streams_a: Tuple[TimeTagStream, TimeTagStream],
    stream_b: TimeTagStream,
    window: float,
    far_offset: float,
    arm_imbalance_delay: float,
    link_offset: float = 0.0,
) -> RatePair:
    """`measure_accidentals` against a single-detector analyzer"""
    _check_offset(far_offset, window, arm_imbalance_delay)
    return count_rate_pair(streams_a, stream_b, window, far_offset, link_offset)


@dataclass(frozen=True)
class DiffHistogram:
    """Histogram of corrected arrival-time differences

    Bin ``k`` covers ``[-t_max + k·bin_width, -t_max + (k+1)·bin_width)``; the
    last bin also holds differences equal to its upper edge.

    """

    bin_width: float
    t_max: float
    counts: Tuple[int, ...]
    link_offset: float = 0.0

    @property
    def edges(self) -> np.ndarray:
        return -self.t_max + self.bin_width * np.arange(len(self.counts) + 1)

    @property
    def centers(self) -> np.ndarray:
        return -self.t_max + self.bin_width * (np.arange(len(self.counts)) + 0.5)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def area(self, center: float, half_width: float) -> int:
        """Sum of the bins whose centres lie within ``half_width`` of ``center``"""
        selected = np.abs(self.centers - center) <= half_width
        return int(np.asarray(self.counts)[selected].sum())


def pair_differences(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    t_max: float,
    link_offset: float = 0.0,
) -> np.ndarray:
    """Corrected differences of all tag pairs (not one-to-one) within ``±t_max``"""
    _check_sorted(stream_a)
    _check_sorted(stream_b)
    low, high = _candidate_ranges(stream_a.times, stream_b.times, link_offset, t_max)
    sizes = high - low
    index_a = np.repeat(np.arange(len(stream_a)), sizes)
    starts = np.repeat(np.cumsum(sizes) - sizes, sizes)
    index_b = np.repeat(low, sizes) + (np.arange(len(index_a)) - starts)
    differences = stream_a.times[index_a] - stream_b.times[index_b] - link_offset
    return differences[np.abs(differences) <= t_max]


def build_histogram(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    bin_width: float,
    t_max: float,
    link_offset: float = 0.0,
) -> DiffHistogram:
    """Histogram the corrected differences of all tag pairs within ``±t_max``

    :param stream_a: Tags of a side-a detector
    :param stream_b: Tags of a side-b detector
    :param bin_width: Bin width in seconds
    :param t_max: Half range in seconds
    :param link_offset: Arrival-time difference caused by the fibers
    :return: The histogram, with satellite peaks at ``±arm_imbalance_delay``
    :raises UnsortedStreamError: If either stream is not sorted

    """
    if not bin_width > 0 or not t_max > 0:
        raise ValueError("Bin width and histogram range must be positive")
    differences = pair_differences(stream_a, stream_b, t_max, link_offset)
    bins = max(1, math.ceil(2 * t_max / bin_width - 1e-9))
    edges = -t_max + bin_width * np.arange(bins + 1)
    counts, _ = np.histogram(differences, bins=edges)
    return DiffHistogram(
        bin_width, t_max, tuple(int(count) for count in counts), link_offset
    )


def merge_streams(streams: Iterable[TimeTagStream], detector: str) -> TimeTagStream:
    """Combine several detectors into one time-sorted stream"""
    parts = list(streams)
    times = np.concatenate([stream.times for stream in parts])
    order = np.argsort(times, kind="stable")
    return TimeTagStream(
        detector,
        times[order],
        np.concatenate([stream.provenance for stream in parts])[order],
        np.concatenate([stream.pair_ids for stream in parts])[order],
        max(stream.duration for stream in parts),
    )


@dataclass(frozen=True)
class LinkOffsetCalibration:
    """Outcome of locating the central coincidence peak"""

    offset: float
    nominal: float
    peak_count: int
    background: float
    calibrated: bool


def calibrate_link_offset(
    stream_a: TimeTagStream,
    stream_b: TimeTagStream,
    window: float,
    nominal: float,
    search_range: float = DEFAULT_SEARCH_RANGE,
    min_significance: float = DEFAULT_MIN_SIGNIFICANCE,
) -> LinkOffsetCalibration:
    """Locate the central peak of the arrival-time differences

    Differences within ``search_range`` of the nominal offset are searched for the
    window-wide interval holding the most pairs. The satellites carry half the
    area of the central peak each, so that interval sits on the central peak. The
    offset is the mean difference inside the window around it.

    :param stream_a: Tags of side a, usually all detectors merged
    :param stream_b: Tags of side b, usually all detectors merged
    :param window: Full window width in seconds
    :param nominal: Offset expected from the fiber lengths
    :param search_range: Half range searched around ``nominal``
    :param min_significance: Standard deviations above background the peak needs
    :return: The calibrated offset, or ``nominal`` if no peak stands out

    """
    differences = np.sort(pair_differences(stream_a, stream_b, search_range, nominal))
    background = len(differences) * window / (2 * search_range)
    if len(differences) == 0:
        logger.warning(
            "No tag pairs near the nominal link offset, keeping %.4e s", nominal
        )
        return LinkOffsetCalibration(nominal, nominal, 0, 0.0, False)
    ends = np.searchsorted(differences, differences + window, side="right")
    in_window = ends - np.arange(len(differences))
    start = int(np.argmax(in_window))
    peak_count = int(in_window[start])
    if peak_count < background + min_significance * math.sqrt(max(background, 1.0)):
        logger.warning(
            "Coincidence peak of %d pairs over %.1f background is not significant,"
            " keeping the nominal link offset %.4e s",
            peak_count,
            background,
            nominal,
        )
        return LinkOffsetCalibration(nominal, nominal, peak_count, background, False)
    center = differences[start] + window / 2
    selected = differences[np.abs(differences - center) <= window / 2]
    offset = nominal + float(np.mean(selected))
    logger.info(
        "Calibrated link offset %.4e s (nominal %.4e s) from a peak of %d pairs",
        offset,
        nominal,
        peak_count,
    )
    return LinkOffsetCalibration(offset, nominal, peak_count, background, True)
