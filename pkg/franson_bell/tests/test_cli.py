import math
from pathlib import Path
from typing import List

import pytest
from click.testing import CliRunner

from franson_bell.__main__ import cli
from franson_bell.experiment import EXPERIMENT1, default_plan, emit_plan, load_plan
from franson_bell.presets import calibrate_preset
from franson_bell.report import read_report
from franson_bell.scenario import ScenarioConfig, emit_scenario, load_scenario, yaml


@pytest.fixture
def scenario_file(bright_scenario: ScenarioConfig, tmp_path: Path) -> Path:
    path = tmp_path / "scenario.yaml"
    path.write_text(emit_scenario(bright_scenario), encoding="utf-8")
    return path


def test_load_preset() -> None:
    result = CliRunner().invoke(cli, ["load", "--preset", "geneva1998"])

    assert result.exit_code == 0
    assert load_scenario(result.stdout) == calibrate_preset()


def test_load_plan(tmp_path: Path) -> None:
    plan = default_plan(EXPERIMENT1, 4, 2.0)
    path = tmp_path / "plan.yaml"
    path.write_text(emit_plan(plan), encoding="utf-8")

    result = CliRunner().invoke(cli, ["load", "--plan", str(path)])

    assert result.exit_code == 0
    assert load_plan(result.stdout) == plan


def test_predict() -> None:
    result = CliRunner().invoke(cli, ["predict", "--preset", "geneva1998"])

    assert result.exit_code == 0
    document = yaml.load(result.stdout)
    assert document["visibility_net"] == pytest.approx(0.955)
    assert document["visibility_raw"]["b"] == pytest.approx(0.853)
    assert document["S_net"] == pytest.approx(2 * math.sqrt(2) * 0.955)
    assert document["below_bell_threshold"] is True
    assert document["central_peak_fraction"] == pytest.approx(0.5)
    assert len(document["fringe"]) == 12
    assert document["accidentals_per_integration"]["a+/b-"] == pytest.approx(
        25.74, rel=1e-3
    )


@pytest.mark.parametrize(
    "args",
    [
        ["load"],
        ["predict"],
        ["run", "--preset", "geneva1998", "--scenario", "{scenario}"],
        ["run", "--preset", "geneva1998", "--format", "pdf"],
        ["run", "--preset", "nowhere"],
    ],
)
def test_usage_error(args: List[str], scenario_file: Path) -> None:
    arguments = [arg.format(scenario=scenario_file) for arg in args]

    result = CliRunner().invoke(cli, arguments)

    assert result.exit_code == 2


@pytest.mark.parametrize(
    "content",
    [
        "source: [1, 2\n",
        "source: {pair_rate: -1.0}\n",
        "colour: blue\n",
    ],
)
def test_invalid_scenario(content: str, tmp_path: Path) -> None:
    path = tmp_path / "scenario.yaml"
    path.write_text(content, encoding="utf-8")

    result = CliRunner().invoke(cli, ["load", "--scenario", str(path)])

    assert result.exit_code == 3
    assert "validation error" in result.output


def test_plan_for_the_wrong_experiment(scenario_file: Path, tmp_path: Path) -> None:
    plan_path = tmp_path / "plan.yaml"
    plan_path.write_text(
        "schema_version: 1\nmode: experiment2\ngrid: {points: 4}\n", encoding="utf-8"
    )

    result = CliRunner().invoke(
        cli,
        ["run", "--scenario", str(scenario_file), "--plan", str(plan_path)],
    )

    assert result.exit_code == 3


def test_resource_limit(tmp_path: Path) -> None:
    result = CliRunner().invoke(
        cli,
        [
            "run",
            "--preset",
            "geneva1998",
            "--max-tags",
            "1000",
            "--out",
            str(tmp_path / "out"),
        ],
    )

    assert result.exit_code == 5
    assert "resource error" in result.output
    assert not (tmp_path / "out").exists()


def test_run_and_analyze(scenario_file: Path, tmp_path: Path) -> None:
    """A dumped run can be recounted with a narrower window"""
    out = tmp_path / "out"
    tags = tmp_path / "tags"
    analysis = tmp_path / "analysis"

    run = CliRunner().invoke(
        cli,
        [
            "run",
            "--scenario",
            str(scenario_file),
            "--points",
            "4",
            "--integration",
            "0.2",
            "--seed",
            "11",
            "--out",
            str(out),
            "--format",
            "json,summary",
            "--dump-tags",
            str(tags),
        ],
    )
    analyze = CliRunner().invoke(
        cli,
        [
            "analyze",
            str(out / "report.json"),
            str(tags),
            "--window",
            "2e-10",
            "--out",
            str(analysis),
        ],
    )

    assert run.exit_code == 0, run.output
    assert sorted(path.name for path in out.iterdir()) == ["report.json", "summary.md"]
    report = read_report(out / "report.json")
    assert report.seed == 11
    assert report.mode == EXPERIMENT1
    assert len(report.points) == 4
    assert f"Run {report.identifier}" in run.stdout
    assert "S four-point raw" in run.stdout
    assert analyze.exit_code == 0, analyze.output
    recount = read_report(analysis / "report.json")
    assert (analysis / "fringe.csv").is_file()
    for point, original in zip(recount.points, report.points):
        assert point.curves["b"].raw.total < original.curves["b"].raw.total


def test_analyze_without_tags(scenario_file: Path, tmp_path: Path) -> None:
    out = tmp_path / "out"
    empty = tmp_path / "empty"
    empty.mkdir()
    CliRunner().invoke(
        cli,
        [
            "run",
            "--scenario",
            str(scenario_file),
            "--points",
            "4",
            "--integration",
            "0.1",
            "--out",
            str(out),
        ],
    )

    result = CliRunner().invoke(
        cli, ["analyze", str(out / "report.json"), str(empty), "--out", str(tmp_path)]
    )

    assert result.exit_code == 4
    assert "I/O error" in result.output


def test_run_without_coincidences(scenario_file: Path, tmp_path: Path) -> None:
    """Scan points too short to hold a coincidence still give a report"""
    result = CliRunner().invoke(
        cli,
        [
            "run",
            "--scenario",
            str(scenario_file),
            "--integration",
            "1e-5",
            "--out",
            str(tmp_path / "out"),
        ],
    )

    assert result.exit_code == 0, result.output
    report = read_report(tmp_path / "out" / "report.json")
    assert len(report.points) == 12
    assert any(point.curves["b"].E_raw is None for point in report.points)
