"""Fit a divergence-free polynomial field to a peak volume."""

from pathlib import Path

import click
import numpy as np

from ._options import INPUT_FILE, OUTPUT_DIR, parse_model
from ..exceptions.experiment import ConflictingOptionsError
from ..exceptions.formats import DimensionMismatchError
from ..schemas.fit import ConstraintMode, FitConfig, MultiPeakPolicy, SignAlignment
from ..services import formats
from ..services.estimator import fit_btd


@click.command("fit")
@click.option("--peaks", type=INPUT_FILE, required=True, help="Peak volume (3 channels)")
@click.option("--mask", type=INPUT_FILE, required=True, help="Bundle mask volume")
@click.option("--seed-region", type=INPUT_FILE, required=True, help="Seed region volume, start of sign alignment")
@click.option("--quality", type=INPUT_FILE, help="Voxels flagged by the peak fit")
@click.option("--exclude-flagged", is_flag=True, help="Leave --quality voxels out of the fit")
@click.option("--extra-peaks", type=INPUT_FILE, help="Secondary peaks, 3 channels per peak")
@click.option("--order", type=int, default=5, show_default=True, help="Polynomial order (1-8)")
@click.option("--constraint", type=click.Choice([m.value for m in ConstraintMode]), help="Divergence constraint")
@click.option("--sign-alignment", type=click.Choice([m.value for m in SignAlignment]), help="Peak sign resolution")
@click.option("--reference-axis", type=float, nargs=3, help="Axis for reference alignment and fallback")
@click.option("--regularization", type=float, help="Ridge weight")
@click.option("--multi-peak", type=click.Choice([m.value for m in MultiPeakPolicy]), help="Peak selection rule")
@click.option("--iterations", type=int, help="Refits for nearest_to_field")
@click.option("--out", type=OUTPUT_DIR, required=True, help="Directory for field.json and fit.json")
def command(
    peaks: Path,
    mask: Path,
    seed_region: Path,
    quality: Path | None,
    exclude_flagged: bool,
    extra_peaks: Path | None,
    order: int,
    constraint: str | None,
    sign_alignment: str | None,
    reference_axis: tuple[float, float, float] | None,
    regularization: float | None,
    multi_peak: str | None,
    iterations: int | None,
    out: Path,
) -> None:
    """Fit the BTD field and print its residual and largest divergence."""

    cfg = parse_model(
        FitConfig,
        order=order,
        constraint_mode=constraint,
        sign_alignment=sign_alignment,
        reference_axis=reference_axis or None,
        regularization=regularization,
        multi_peak_policy=multi_peak,
        iterations=iterations,
        exclude_flagged=exclude_flagged,
    )
    if exclude_flagged and quality is None:
        raise ConflictingOptionsError("--exclude-flagged needs --quality")
    vol = formats.read_peak_volume(peaks, mask, quality)
    seeds = formats.read_mask(seed_region)
    if seeds.dims != vol.dims:
        raise DimensionMismatchError(f"seed region {seeds.dims} does not match mask {vol.dims}")
    if extra_peaks is not None:
        extra = formats.read_volume(extra_peaks).data
        if extra.ndim != 4 or extra.shape[:3] != vol.dims or extra.shape[3] % 3:
            raise DimensionMismatchError(f"extra peaks {extra.shape} do not match mask {vol.dims} x 3k")
        vol.extra_peaks = np.asarray(extra, dtype=np.float64).reshape(*vol.dims, -1, 3)

    field, report = fit_btd(vol, seeds.data, cfg)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_field(out / "field.json", field)
    formats.write_fit_report(out / "fit.json", report)
    click.echo(f"residual {report.residual:.6g}  max divergence {report.max_divergence:.3g}")
    click.echo(f"rank {report.rank}  condition {report.condition_estimate:.3g}  time {report.elapsed:.2f}s")
    if report.n_excluded:
        click.echo(f"{report.n_excluded} flagged voxels left out")
