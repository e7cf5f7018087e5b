"""Generate a phantom with simulated or analytic peaks."""

from pathlib import Path

import click
import numpy as np

from ._options import OUTPUT_DIR, parse_model
from ..exceptions.experiment import ConflictingOptionsError
from ..exceptions.phantom import InvalidPhantomSpecError
from ..logger import get_logger
from ..schemas.phantom import PhantomKind, PhantomSpec
from ..services import formats
from ..services.phantom import analytic_peaks, fit_tensors, make_phantom, simulate_dwi


logger = get_logger(__name__)


@click.command("phantom")
@click.option("--kind", type=click.Choice([k.value for k in PhantomKind]), required=True, help="Phantom geometry")
@click.option("--alpha", type=float, help="Sine amplitude parameter in [0, 1]")
@click.option("--r1", type=float, help="Circle inner radius (mm)")
@click.option("--r2", type=float, help="Circle outer radius (mm)")
@click.option("--dims", type=int, nargs=3, help="Grid size")
@click.option("--voxel-size", type=float, nargs=3, help="Voxel size (mm)")
@click.option("--snr", type=float, default=float("inf"), show_default=True, help="Signal to noise ratio")
@click.option("--bvalue", type=float, help="b-value (s/mm^2)")
@click.option("--gradients", type=int, help="Number of gradient directions")
@click.option("--seeds", type=int, help="Number of seeds recorded for tracking")
@click.option("--rng", type=int, default=0, show_default=True, help="Noise seed")
@click.option("--analytic", is_flag=True, help="Write the analytic directions as peaks (requires --snr inf)")
@click.option("--out", type=OUTPUT_DIR, required=True, help="Output directory")
def command(
    kind: str,
    alpha: float | None,
    r1: float | None,
    r2: float | None,
    dims: tuple[int, int, int] | None,
    voxel_size: tuple[float, float, float] | None,
    snr: float,
    bvalue: float | None,
    gradients: int | None,
    seeds: int | None,
    rng: int,
    analytic: bool,
    out: Path,
) -> None:
    """
    Generate a phantom: mask, seed and target regions, ground truth streamlines and peaks.

    Peaks are fitted to a simulated diffusion signal unless --analytic is given.
    """

    if analytic and np.isfinite(snr):
        raise ConflictingOptionsError("--analytic cannot be combined with a finite --snr")
    spec = parse_model(
        PhantomSpec,
        InvalidPhantomSpecError,
        kind=kind,
        alpha=alpha,
        r1=r1,
        r2=r2,
        dims=dims or None,
        voxel_size=voxel_size or None,
        snr=snr,
        bvalue=bvalue,
        n_gradients=gradients,
        seed_count=seeds,
    )
    ph = make_phantom(spec)
    out.mkdir(parents=True, exist_ok=True)

    if analytic:
        peaks = analytic_peaks(ph).peaks
    else:
        dwi = simulate_dwi(ph, spec, rng)
        fit = fit_tensors(dwi, ph.mask.data)
        peaks = fit.peaks
        formats.write_volume(out / "dwi.json", dwi.signals, ph.voxel_size)
        formats.write_volume(out / "quality.json", fit.quality, ph.voxel_size)
        formats.write_gradients(out / "gradients.txt", dwi)

    formats.write_volume(out / "mask.json", ph.mask.data, ph.voxel_size)
    formats.write_volume(out / "seed.json", ph.seed_region.data, ph.voxel_size)
    formats.write_volume(out / "target.json", ph.target_region.data, ph.voxel_size)
    formats.write_volume(out / "peaks.json", peaks, ph.voxel_size)
    formats.write_tractogram(out / "truth.tsf", ph.ground_truth)
    (out / "phantom.json").write_text(spec.json(indent=2) + "\n")

    logger.info(f"{spec.label}: {int(ph.mask.data.sum())} mask voxels written to {out}")
    click.echo(f"{spec.label}: {int(ph.mask.data.sum())} voxels, {len(ph.ground_truth)} ground truth streamlines")
