from typing import Any

import click

from . import experiment, fit, phantom, schema, score, track
from .. import __version__
from ..exceptions import BTDException
from ..logger import get_logger


logger = get_logger(__name__)


class BTDGroup(click.Group):
    """Command group translating domain errors into log records and exit codes."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except BTDException as e:
            logger.error(f"{e.detail}: {e}" if str(e) != e.detail else e.detail)
            raise click.exceptions.Exit(e.exit_code) from e


@click.group(cls=BTDGroup)
@click.version_option(__version__, prog_name="btd")
def cli() -> None:
    """Bundle-specific tractography: phantoms, field fitting, tracking and scoring."""


for module in [phantom, fit, track, score, experiment, schema]:
    cli.add_command(module.command)
