"""Print the JSON schema of experiment run files."""

import click

from ..schemas.experiment import RunConfig


@click.command("schema")
def command() -> None:
    """Print the JSON schema run files are validated against."""

    click.echo(RunConfig.schema_json(indent=2))
