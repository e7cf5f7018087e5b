"""Run an experiment grid from a run file."""

import asyncio
from pathlib import Path

import click

from ._options import OUTPUT_DIR
from ..exceptions.formats import RunFileError
from ..services.experiment import load_run_config, output_dir, plan, run_experiment
from ..settings import settings


def resolve_run_file(run: str) -> Path:
    """A run file path, or the name of a bundled run such as `table1`."""

    path = Path(run)
    if path.is_file():
        return path
    bundled = settings.experiments / f"{run.removesuffix('.json')}.json"
    if bundled.is_file():
        return bundled
    raise RunFileError(f"no run file {run!r} (looked in {settings.experiments})")


@click.command("experiment")
@click.argument("run")
@click.option("--out", type=OUTPUT_DIR, help="Results directory, overrides the run file")
@click.option("--jobs", type=click.IntRange(min=1), help="Cells running at the same time")
@click.option("--dry-run", is_flag=True, help="Only list the planned cells")
def command(run: str, out: Path | None, jobs: int | None, dry_run: bool) -> None:
    """Run every phantom x snr x method cell of RUN and write per-cell results plus table.csv."""

    cfg = load_run_config(resolve_run_file(run))
    if dry_run:
        for cell in plan(cfg):
            click.echo(cell.key)
        click.echo(f"-> {output_dir(cfg, out)}")
        return

    results = asyncio.run(run_experiment(cfg, out, jobs))
    click.echo(f"{len(results)} cells written to {output_dir(cfg, out)}")
