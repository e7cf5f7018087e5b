"""Trace streamlines through a fitted field, or with the peak-following baseline."""

from pathlib import Path

import click

from ._options import INPUT_FILE, OUTPUT_FILE, parse_model
from ..exceptions.btd_exception import InvalidArgumentError
from ..exceptions.experiment import ConflictingOptionsError
from ..exceptions.formats import DimensionMismatchError
from ..schemas.trace import TraceConfig
from ..services import formats
from ..services.tracer import seeds_from_region, trace, trace_baseline


FALLBACK_SEEDS = 2000


def default_seed_count(seed_region: Path) -> int:
    spec_path = seed_region.parent / "phantom.json"
    if not spec_path.is_file():
        return FALLBACK_SEEDS
    return formats.read_phantom_spec(spec_path).seeds


@click.command("track")
@click.option("--field", "field_path", type=INPUT_FILE, help="Fitted field (field.json)")
@click.option("--baseline", "peaks_path", type=INPUT_FILE, help="Follow this peak volume instead of a field")
@click.option("--mask", type=INPUT_FILE, required=True, help="Bundle mask volume")
@click.option("--seed-region", type=INPUT_FILE, required=True, help="Seed region volume")
@click.option("--seeds", "seed_count", type=int, help="Number of seeds [default: from phantom.json, else 2000]")
@click.option("--target", type=INPUT_FILE, help="Target region volume, reaching it ends a streamline")
@click.option("--step", type=float, help="Step size (mm)")
@click.option("--max-steps", type=int, help="Step limit per streamline")
@click.option("--min-length", type=float, help="Discard shorter streamlines (mm)")
@click.option("--max-angle", type=float, help="Baseline curvature limit per step (degrees)")
@click.option("--raw-field", is_flag=True, help="Integrate the field itself instead of its direction")
@click.option("--out", type=OUTPUT_FILE, required=True, help="Tractogram file")
@click.option("--svg", type=OUTPUT_FILE, help="Also render an xy projection")
def command(
    field_path: Path | None,
    peaks_path: Path | None,
    mask: Path,
    seed_region: Path,
    seed_count: int | None,
    target: Path | None,
    step: float | None,
    max_steps: int | None,
    min_length: float | None,
    max_angle: float | None,
    raw_field: bool,
    out: Path,
    svg: Path | None,
) -> None:
    """Trace from the seed region and print kept and discarded counts per status."""

    if (field_path is None) == (peaks_path is None):
        raise ConflictingOptionsError("give exactly one of --field and --baseline")
    if raw_field and peaks_path is not None:
        raise ConflictingOptionsError("--raw-field applies to fitted fields only")
    cfg = parse_model(
        TraceConfig,
        step_size=step,
        max_steps=max_steps,
        min_length=min_length,
        max_angle_per_step=max_angle,
        normalize_field=not raw_field,
    )

    grid = formats.read_mask(mask)
    regions = [formats.read_mask(seed_region)] + ([formats.read_mask(target)] if target else [])
    if any(region.dims != grid.dims for region in regions):
        raise DimensionMismatchError(f"seed and target regions must match the mask {grid.dims}")
    if not (regions[0].data & grid.data).any():
        raise InvalidArgumentError("seed region does not overlap the mask")
    if seed_count is None:
        seed_count = default_seed_count(seed_region)
    seeds = seeds_from_region(regions[0], seed_count)
    target_grid = regions[1] if target else None

    if peaks_path is not None:
        vol = formats.read_peak_volume(peaks_path, mask)
        tractogram = trace_baseline(vol, seeds, grid, cfg, target=target_grid)
    else:
        assert field_path is not None
        tractogram = trace(formats.read_field(field_path), seeds, grid, cfg, target=target_grid)

    formats.write_tractogram(out, tractogram)
    if svg is not None:
        formats.render_svg(tractogram, grid, svg)

    kept = tractogram.status_counts()
    for status, count in kept.items():
        click.echo(f"{status.value:<15} kept {count:>6}  discarded {tractogram.discarded.get(status, 0):>6}")
