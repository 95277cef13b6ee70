"""Experiment reports and the files they are written to

A report is written as any combination of

- ``report.json``: the complete report, readable back with `read_report`
- ``fringe.csv``, ``quads.csv`` and ``histogram.csv``: plot-ready tables
- ``summary.md``: a short human-readable summary rendered with Jinja2

"""

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass
from hashlib import sha256
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

from base58 import b58encode
from jinja2 import Environment, PackageLoader

from franson_bell.artifacts import ArtifactWriter
from franson_bell.bell import (
    BellResult,
    CorrelationPoint,
    FringeFit,
    SinglesConsistency,
)
from franson_bell.coincidence import (
    DiffHistogram,
    LinkOffsetCalibration,
    RatePair,
    RateQuad,
)

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "summary")
FILES = {
    "json": ("report.json",),
    "csv": ("fringe.csv", "quads.csv", "histogram.csv"),
    "summary": ("summary.md",),
}
PICOSECOND = 1e-12

Counts = Union[RateQuad, RatePair]


class ReportWriteError(OSError):
    """Raised when a report file cannot be written or read"""

    def __init__(self, path: Path, reason: str) -> None:
        super().__init__(f"{path}: {reason}")
        self.path = path


@dataclass(frozen=True)
class CurvePoint:
    """Counts and correlation of one side-b analyzer at one scan point

    :param accidentals: Expected accidentals subtracted from ``raw``
    :param measured_accidentals: Displaced-window count of this acquisition
    :param E_raw: ``None`` without coincidences
    :param E_net: ``None`` if nothing is left after subtraction

    """

    raw: Counts
    measured_accidentals: Counts
    accidentals: Counts
    net: Counts
    E_raw: Optional[CorrelationPoint]
    E_net: Optional[CorrelationPoint]


@dataclass(frozen=True)
class PointRecord:
    """Everything measured at one scan point

    :param phases: Phase of every analyzer by name
    :param singles: Number of tags of every detector
    :param curves: Results per side-b analyzer

    """

    index: int
    integration_time: float
    phases: Dict[str, float]
    singles: Dict[str, int]
    curves: Dict[str, CurvePoint]


@dataclass(frozen=True)
class ScheduleCheck:
    """Fringe rate measured while both analyzers ramp their phases

    :param passed: ``None`` if too few coincidences were recorded to check

    """

    rate_1: float
    rate_2: float
    duration: float
    expected_rate: float
    measured_rate: Optional[float]
    flat_p_value: Optional[float]
    passed: Optional[bool]
    times: Tuple[float, ...]
    E: Tuple[float, ...]
    sigma_E: Tuple[float, ...]


@dataclass(frozen=True)
class ExperimentReport:
    """Result of one experiment run

    :param scenario: The scenario document the run used
    :param plan: The scan plan document
    :param fits: Fringe fits by side-b analyzer and variant
    :param expectations: Closed-form predictions for comparison

    """

    identifier: str
    mode: str
    seed: int
    chsh_selection: str
    scenario: Dict[str, Any]
    plan: Dict[str, Any]
    link_offset: LinkOffsetCalibration
    histogram: DiffHistogram
    points: Tuple[PointRecord, ...]
    fits: Dict[str, Dict[str, FringeFit]]
    bell: Tuple[BellResult, ...]
    singles_consistency: Dict[str, SinglesConsistency]
    schedules: Tuple[ScheduleCheck, ...]
    qber: Optional[float]
    below_bell_threshold: Optional[bool]
    expectations: Dict[str, float]

    @property
    def curves(self) -> List[str]:
        return list(self.points[0].curves) if self.points else []


def calculate_identifier(
    scenario: Mapping[str, Any], plan: Mapping[str, Any], seed: int
) -> str:
    """Calculate a short identifier for a run from its inputs

    :param scenario: The scenario document
    :param plan: The plan document
    :param seed: The root seed
    :return: Base58 encoding of the first four bytes of a SHA-256 digest

    """
    text = json.dumps(
        {"scenario": scenario, "plan": plan, "seed": seed}, sort_keys=True
    )
    hashed = sha256(text.encode("utf-8"))
    return b58encode(hashed.digest()[:4]).decode("ascii")


def _counts_to_dict(counts: Counts) -> Dict[str, Any]:
    kind = "quad" if isinstance(counts, RateQuad) else "pair"
    return {"kind": kind, **asdict(counts)}


def _counts_from_dict(data: Mapping[str, Any]) -> Counts:
    fields = {key: value for key, value in data.items() if key != "kind"}
    if data["kind"] == "quad":
        return RateQuad(**fields)
    return RatePair(**fields)


def _curve_from_dict(data: Mapping[str, Any]) -> CurvePoint:
    return CurvePoint(
        raw=_counts_from_dict(data["raw"]),
        measured_accidentals=_counts_from_dict(data["measured_accidentals"]),
        accidentals=_counts_from_dict(data["accidentals"]),
        net=_counts_from_dict(data["net"]),
        E_raw=None if data["E_raw"] is None else CorrelationPoint(**data["E_raw"]),
        E_net=None if data["E_net"] is None else CorrelationPoint(**data["E_net"]),
    )


def report_to_dict(report: ExperimentReport) -> Dict[str, Any]:
    """Convert a report to JSON-compatible data"""
    data = asdict(report)
    data["points"] = [
        {
            **asdict(point),
            "curves": {
                name: {
                    **asdict(curve),
                    "raw": _counts_to_dict(curve.raw),
                    "measured_accidentals": _counts_to_dict(curve.measured_accidentals),
                    "accidentals": _counts_to_dict(curve.accidentals),
                    "net": _counts_to_dict(curve.net),
                }
                for name, curve in point.curves.items()
            },
        }
        for point in report.points
    ]
    for result, result_data in zip(report.bell, data["bell"]):
        result_data["n_sigma"] = result.n_sigma
    return data


def report_from_dict(data: Mapping[str, Any]) -> ExperimentReport:
    """Convert data written by `report_to_dict` back to a report"""
    return ExperimentReport(
        identifier=data["identifier"],
        mode=data["mode"],
        seed=data["seed"],
        chsh_selection=data["chsh_selection"],
        scenario=data["scenario"],
        plan=data["plan"],
        link_offset=LinkOffsetCalibration(**data["link_offset"]),
        histogram=DiffHistogram(
            bin_width=data["histogram"]["bin_width"],
            t_max=data["histogram"]["t_max"],
            counts=tuple(data["histogram"]["counts"]),
            link_offset=data["histogram"]["link_offset"],
        ),
        points=tuple(
            PointRecord(
                index=point["index"],
                integration_time=point["integration_time"],
                phases=point["phases"],
                singles=point["singles"],
                curves={
                    name: _curve_from_dict(curve)
                    for name, curve in point["curves"].items()
                },
            )
            for point in data["points"]
        ),
        fits={
            curve: {variant: FringeFit(**fit) for variant, fit in variants.items()}
            for curve, variants in data["fits"].items()
        },
        bell=tuple(
            BellResult(
                S=result["S"],
                sigma_S=result["sigma_S"],
                mode=result["mode"],
                variant=result["variant"],
                points=tuple(result["points"]),
            )
            for result in data["bell"]
        ),
        singles_consistency={
            detector: SinglesConsistency(**consistency)
            for detector, consistency in data["singles_consistency"].items()
        },
        schedules=tuple(
            ScheduleCheck(
                **{
                    **check,
                    "times": tuple(check["times"]),
                    "E": tuple(check["E"]),
                    "sigma_E": tuple(check["sigma_E"]),
                }
            )
            for check in data["schedules"]
        ),
        qber=data["qber"],
        below_bell_threshold=data["below_bell_threshold"],
        expectations=data["expectations"],
    )


def read_report(path: Path) -> ExperimentReport:
    """Read a ``report.json`` file

    :raises ReportWriteError: If the file cannot be read

    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ReportWriteError(path, exc.strerror or str(exc)) from exc
    return report_from_dict(json.loads(text))


def render_json(report: ExperimentReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


def _csv(header: Iterable[str], rows: Iterable[Iterable[object]]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return output.getvalue()


def _optional(value: Optional[float]) -> object:
    return "" if value is None else repr(value)


def render_fringe_csv(report: ExperimentReport) -> str:
    """One row per scan point and side-b analyzer: phases, raw and net E with errors"""
    rows = []
    for point in report.points:
        for name, curve in point.curves.items():
            rows.append(
                [
                    point.index,
                    name,
                    repr(point.phases["a"]),
                    repr(point.phases[name]),
                    repr(point.phases["a"] + point.phases[name]),
                    _optional(None if curve.E_raw is None else curve.E_raw.E),
                    _optional(None if curve.E_raw is None else curve.E_raw.sigma_E),
                    _optional(None if curve.E_net is None else curve.E_net.E),
                    _optional(None if curve.E_net is None else curve.E_net.sigma_E),
                ]
            )
    return _csv(
        [
            "point",
            "analyzer",
            "delta_1",
            "delta_2",
            "phase_sum",
            "E_raw",
            "sigma_raw",
            "E_net",
            "sigma_net",
        ],
        rows,
    )


_PORT_PAIRS = {"quad": ("++", "+-", "-+", "--"), "pair": ("++", "-+")}


def render_quads_csv(report: ExperimentReport) -> str:
    """One row per scan point, analyzer, kind of count and port pair"""
    rows = []
    for point in report.points:
        for name, curve in point.curves.items():
            for kind, counts in (
                ("raw", curve.raw),
                ("accidental", curve.measured_accidentals),
                ("net", curve.net),
            ):
                kind_of_counts = "quad" if isinstance(counts, RateQuad) else "pair"
                port_pairs = _PORT_PAIRS[kind_of_counts]
                for port_pair, count in zip(port_pairs, counts.counts):
                    rows.append(
                        [
                            point.index,
                            name,
                            kind,
                            port_pair,
                            count,
                            repr(counts.integration_time),
                            repr(counts.window / PICOSECOND),
                        ]
                    )
    return _csv(
        ["point", "analyzer", "kind", "port_pair", "count", "T_s", "w_ps"], rows
    )


def render_histogram_csv(histogram: DiffHistogram) -> str:
    return _csv(
        ["offset_ps", "count"],
        (
            [repr(round(center / PICOSECOND, 6)), count]
            for center, count in zip(histogram.centers, histogram.counts)
        ),
    )


def render_summary(report: ExperimentReport) -> str:
    """Render the Markdown summary using the Jinja2 template"""
    env = Environment(loader=PackageLoader("franson_bell"), keep_trailing_newline=True)
    template = env.get_template("summary.md.j2")
    return template.render(report=report)


def render_files(report: ExperimentReport, formats: Iterable[str]) -> Dict[str, str]:
    """Render the requested formats to file contents by file name"""
    renderers = {
        "report.json": lambda: render_json(report),
        "fringe.csv": lambda: render_fringe_csv(report),
        "quads.csv": lambda: render_quads_csv(report),
        "histogram.csv": lambda: render_histogram_csv(report.histogram),
        "summary.md": lambda: render_summary(report),
    }
    files = {}
    for report_format in formats:
        if report_format not in FILES:
            raise ValueError(f"Unknown report format {report_format!r}")
        for name in FILES[report_format]:
            files[name] = renderers[name]()
    return files


def emit_report(
    report: ExperimentReport, directory: Path, formats: Iterable[str]
) -> List[Path]:
    """Write report files, leaving unchanged files untouched

    Report files of earlier runs in the directory which this call does not
    produce are removed.

    :param report: The report
    :param directory: Output directory, created if missing
    :param formats: Any of ``json``, ``csv`` and ``summary``
    :return: Paths of the files this report consists of
    :raises ReportWriteError: If a file cannot be written

    """
    files = render_files(report, formats)
    managed = [name for names in FILES.values() for name in names]
    writer = ArtifactWriter(directory, managed)
    paths = []
    for name, content in files.items():
        path = directory / name
        try:
            if writer.write_text(content, path):
                logger.info("Wrote %s", path)
            else:
                logger.debug("%s is unchanged", path)
        except OSError as exc:
            raise ReportWriteError(path, exc.strerror or str(exc)) from exc
        paths.append(path)
    for path in writer.remove_stale():
        logger.info("Removed stale %s", path)
    return paths
