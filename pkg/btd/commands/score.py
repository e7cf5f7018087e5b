"""Score a tractogram against the phantom it was traced on."""

from pathlib import Path

import click

from ._options import INPUT_DIR, INPUT_FILE, OUTPUT_FILE, parse_model
from ..schemas.score import MetricConfig
from ..services import formats
from ..services.metrics import score
from ..services.phantom import make_phantom


@click.command("score")
@click.option("--tractogram", type=INPUT_FILE, required=True, help="Tractogram file")
@click.option("--phantom", type=INPUT_DIR, required=True, help="Directory written by `btd phantom`")
@click.option("--dilation", type=int, help="Truth mask dilation (voxels) for OR and VC")
@click.option("--signed-deviation", is_flag=True, help="Sum signed radial errors")
@click.option("--out", type=OUTPUT_FILE, multiple=True, help="Report file, .json or .csv; may be repeated")
def command(
    tractogram: Path, phantom: Path, dilation: int | None, signed_deviation: bool, out: tuple[Path, ...]
) -> None:
    """Compute VC, OL, OR and, for circle phantoms, the deviation."""

    cfg = parse_model(MetricConfig, dilation=dilation, signed_deviation=signed_deviation)
    ph = make_phantom(formats.read_phantom_spec(phantom / "phantom.json"))
    report = score(formats.read_tractogram(tractogram), ph, cfg)
    for path in out:
        formats.write_score(path, report)
    click.echo(report.json(by_alias=True))
