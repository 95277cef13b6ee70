"""Command line interface for the Franson Bell test simulator."""

import logging
from typing import Any

import click

from franson_bell.analyze import analyze
from franson_bell.bell import EmptyCountsError, InsufficientSpanError
from franson_bell.experiment import TopologyError
from franson_bell.load import load
from franson_bell.montecarlo import ResourceLimitError
from franson_bell.predict import predict
from franson_bell.run import run
from franson_bell.scenario import ScenarioParseError, ScenarioValidationError

EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_RESOURCE = 5

VALIDATION_ERRORS = (
    ScenarioParseError,
    ScenarioValidationError,
    TopologyError,
    InsufficientSpanError,
    EmptyCountsError,
)


class CategorizedGroup(click.Group):
    """Report domain errors as one line and exit with a code per category"""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except VALIDATION_ERRORS as exc_info:
            click.echo(f"validation error: {exc_info}", err=True)
            ctx.exit(EXIT_VALIDATION)
        except ResourceLimitError as exc_info:
            click.echo(f"resource error: {exc_info}", err=True)
            ctx.exit(EXIT_RESOURCE)
        except OSError as exc_info:
            click.echo(f"I/O error: {exc_info}", err=True)
            ctx.exit(EXIT_IO)


@click.group(cls=CategorizedGroup)
@click.option("-v", "--verbose", is_flag=True, help="Log debug messages")
def cli(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


cli.add_command(run)
cli.add_command(analyze)
cli.add_command(predict)
cli.add_command(load)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
