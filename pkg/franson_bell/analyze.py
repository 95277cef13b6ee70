"""Subcommand for recounting dumped time tags with the statistics of a new run"""

from pathlib import Path
from typing import Optional

import click

from franson_bell.experiment import analyze_dump
from franson_bell.report import emit_report, read_report
from franson_bell.run import parse_formats


@click.command()
@click.argument(
    "report_path", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@click.argument(
    "tags_directory", type=click.Path(exists=True, file_okay=False, path_type=Path)
)
@click.option(
    "--window",
    type=click.FloatRange(min=0, min_open=True),
    help="Coincidence window in seconds, by default the one of the original run",
)
@click.option(
    "--out",
    "output_directory",
    default="./analysis",
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory to write the new report into",
)
@click.option(
    "--format",
    "formats",
    default="json,csv",
    help="Comma separated: json, csv, summary",
)
def analyze(
    report_path: Path,
    tags_directory: Path,
    window: Optional[float],
    output_directory: Path,
    formats: str,
) -> None:
    """Recount time tags dumped by ``run --dump-tags`` and redo the statistics
    \f

    :param report_path: The ``report.json`` of the run that dumped the tags
    :param tags_directory: Directory with the dumped ``tags-NNN.npz`` files
    :param window: Coincidence window replacing the scenario's
    :param output_directory: Directory for the new report files
    :param formats: Comma separated report formats

    """
    report_formats = parse_formats(formats)
    report = analyze_dump(read_report(report_path), tags_directory, window)
    emit_report(report, output_directory, report_formats)
    click.echo(f"Run {report.identifier}: {output_directory}")
