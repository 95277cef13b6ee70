import csv
import json
from dataclasses import replace
from pathlib import Path
from typing import Dict, List

import pytest

from franson_bell.bell import FOUR_POINT, RAW
from franson_bell.report import (
    FILES,
    ExperimentReport,
    ReportWriteError,
    ScheduleCheck,
    calculate_identifier,
    emit_report,
    read_report,
    render_files,
    render_json,
    render_summary,
    report_from_dict,
    report_to_dict,
)


def _rows(path: Path) -> List[Dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as csv_file:
        return list(csv.DictReader(csv_file))


def test_report_survives_json(bright_report: ExperimentReport) -> None:
    result = report_from_dict(json.loads(render_json(bright_report)))

    assert result == bright_report


def test_report_to_dict_adds_n_sigma(bright_report: ExperimentReport) -> None:
    result = report_to_dict(bright_report)

    assert [bell["n_sigma"] for bell in result["bell"]] == [
        bell.n_sigma for bell in bright_report.bell
    ]
    assert result["points"][0]["curves"]["b"]["raw"]["kind"] == "quad"


@pytest.mark.parametrize(
    "formats, expect",
    [
        (["json"], ["report.json"]),
        (["csv"], ["fringe.csv", "histogram.csv", "quads.csv"]),
        (["summary"], ["summary.md"]),
        (
            ["json", "csv", "summary"],
            [
                "fringe.csv",
                "histogram.csv",
                "quads.csv",
                "report.json",
                "summary.md",
            ],
        ),
    ],
)
def test_emit_report(
    bright_report: ExperimentReport,
    tmp_path: Path,
    formats: List[str],
    expect: List[str],
) -> None:
    result = emit_report(bright_report, tmp_path / "out", formats)

    assert sorted(path.name for path in result) == expect
    assert sorted(path.name for path in (tmp_path / "out").iterdir()) == expect


def test_read_report(bright_report: ExperimentReport, tmp_path: Path) -> None:
    emit_report(bright_report, tmp_path, ["json"])

    result = read_report(tmp_path / "report.json")

    assert result == bright_report


def test_emit_report_twice_keeps_files(
    bright_report: ExperimentReport, tmp_path: Path
) -> None:
    """An identical report leaves every file and its modification time alone"""
    paths = emit_report(bright_report, tmp_path, ["json", "csv", "summary"])
    before = {path: (path.read_bytes(), path.stat().st_mtime_ns) for path in paths}

    emit_report(bright_report, tmp_path, ["json", "csv", "summary"])

    result = {path: (path.read_bytes(), path.stat().st_mtime_ns) for path in paths}
    assert result == before


def test_emit_report_removes_stale_files(
    bright_report: ExperimentReport, tmp_path: Path
) -> None:
    emit_report(bright_report, tmp_path, ["json", "csv", "summary"])
    (tmp_path / "notes.txt").write_text("mine", encoding="utf-8")

    emit_report(bright_report, tmp_path, ["json"])

    assert sorted(path.name for path in tmp_path.iterdir()) == [
        "notes.txt",
        "report.json",
    ]


def test_emit_report_into_a_file(
    bright_report: ExperimentReport, tmp_path: Path
) -> None:
    target = tmp_path / "out"
    target.write_text("", encoding="utf-8")

    with pytest.raises(ReportWriteError):
        emit_report(bright_report, target, ["json"])


def test_read_missing_report(tmp_path: Path) -> None:
    with pytest.raises(ReportWriteError) as exc_info:
        read_report(tmp_path / "report.json")

    assert exc_info.value.path == tmp_path / "report.json"


def test_unknown_format(bright_report: ExperimentReport) -> None:
    with pytest.raises(ValueError):
        render_files(bright_report, ["json", "pdf"])


def test_every_format_has_files() -> None:
    assert set(FILES) == {"json", "csv", "summary"}


def test_fringe_csv(bright_report: ExperimentReport, tmp_path: Path) -> None:
    emit_report(bright_report, tmp_path, ["csv"])

    result = _rows(tmp_path / "fringe.csv")

    assert len(result) == len(bright_report.points)
    assert list(result[0]) == [
        "point",
        "analyzer",
        "delta_1",
        "delta_2",
        "phase_sum",
        "E_raw",
        "sigma_raw",
        "E_net",
        "sigma_net",
    ]
    for row, point in zip(result, bright_report.points):
        E_raw = point.curves["b"].E_raw
        assert E_raw is not None
        assert int(row["point"]) == point.index
        assert row["analyzer"] == "b"
        assert float(row["E_raw"]) == E_raw.E
        assert float(row["phase_sum"]) == E_raw.phase_sum


def test_quads_csv(bright_report: ExperimentReport, tmp_path: Path) -> None:
    emit_report(bright_report, tmp_path, ["csv"])

    result = _rows(tmp_path / "quads.csv")

    assert len(result) == len(bright_report.points) * 3 * 4
    assert list(result[0]) == [
        "point",
        "analyzer",
        "kind",
        "port_pair",
        "count",
        "T_s",
        "w_ps",
    ]
    assert {row["kind"] for row in result} == {"raw", "accidental", "net"}
    assert {row["port_pair"] for row in result} == {"++", "+-", "-+", "--"}
    assert all(float(row["w_ps"]) == pytest.approx(550.0) for row in result)
    first = [row for row in result if row["point"] == "0" and row["kind"] == "raw"]
    assert [int(row["count"]) for row in first] == list(
        bright_report.points[0].curves["b"].raw.counts
    )


def test_histogram_csv(bright_report: ExperimentReport, tmp_path: Path) -> None:
    emit_report(bright_report, tmp_path, ["csv"])

    result = _rows(tmp_path / "histogram.csv")

    assert len(result) == len(bright_report.histogram.counts)
    assert sum(int(row["count"]) for row in result) == bright_report.histogram.total
    assert float(result[0]["offset_ps"]) < 0 < float(result[-1]["offset_ps"])


def test_render_summary(bright_report: ExperimentReport) -> None:
    result = render_summary(bright_report)

    assert result.startswith(f"# Run {bright_report.identifier}\n")
    assert "- Mode: experiment1\n" in result
    assert "- Seed: 7\n" in result
    assert "- Scan points: 8\n" in result
    assert f"| b | {RAW} |" in result
    assert f"| {FOUR_POINT} | {RAW} |" in result
    assert "below the Bell threshold" in result
    assert "| a+ |" in result
    assert "## Phase ramps" not in result


def test_render_summary_without_fits(bright_report: ExperimentReport) -> None:
    report = replace(
        bright_report, fits={"b": {}}, bell=(), qber=None, below_bell_threshold=None
    )

    result = render_summary(report)

    assert "QBER" not in result
    assert "## Bell parameters" in result


def test_render_summary_unchecked_schedule(bright_report: ExperimentReport) -> None:
    unchecked = ScheduleCheck(0.4, 0.4, 5.0, 0.8, None, None, None, (), (), ())
    report = replace(bright_report, schedules=(unchecked,))

    result = render_summary(report)

    assert "## Phase ramps" in result
    assert "| 0.4 | 0.4 | 0.8000 | n/a | not checked |" in result


def test_calculate_identifier() -> None:
    scenario = {"source": {"pair_rate": 2e5}}
    plan = {"mode": "experiment1"}

    result = calculate_identifier(scenario, plan, 7)

    assert result == calculate_identifier(dict(scenario), dict(plan), 7)
    assert result != calculate_identifier(scenario, plan, 8)
    assert result != calculate_identifier(scenario, {"mode": "experiment2"}, 7)
    assert 4 <= len(result) <= 6
