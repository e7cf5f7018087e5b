"""
Synthetic bundles with known geometry: masks, seed and target regions, analytic directions and ground truth
streamlines, plus a single-tensor diffusion signal simulator and the tensor fit that turns it into peaks.
"""

from dataclasses import dataclass, field as dataclass_field
from math import ceil, pi
from typing import Any, Callable

import numpy as np
from numpy.typing import NDArray

from .estimator import PeakVolume
from .tracer import Streamline, Tractogram, seeds_from_region
from ..exceptions.phantom import InvalidPhantomSpecError
from ..logger import get_logger
from ..schemas.phantom import PhantomKind, PhantomSpec
from ..schemas.trace import StreamlineStatus
from ..utils.grid import VoxelGrid, grid_centers


logger = get_logger(__name__)

FIBER_EIGENVALUES = (1.7e-3, 0.3e-3, 0.3e-3)
ISOTROPIC_DIFFUSIVITY = 0.7e-3
SIGNAL_FLOOR = 1e-6
LOW_ANISOTROPY = 0.1
TRUTH_STEP = 0.1
TRUTH_SPACING = 0.25

SINE_HALF_PERIODS = 1
SINE_SLOPE_PER_ALPHA = 3.75
SINE_HALF_HEIGHT = 0.05
HOUGH_STEM_HALF_WIDTH = 5.0
HOUGH_SEED_ROWS = 6
HOUGH_MAX_ANGLE = 80.0
HOUGH_FIBERS = 161
HOUGH_TARGET_LENGTH = 2.0

DirectionField = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(eq=False)
class Phantom:
    spec: PhantomSpec
    mask: VoxelGrid
    seed_region: VoxelGrid
    target_region: VoxelGrid
    ground_truth: Tractogram
    direction: DirectionField
    provenance: dict[str, Any] = dataclass_field(default_factory=dict)

    @property
    def voxel_size(self) -> NDArray[np.float64]:
        return self.mask.voxel_size

    def seeds(self) -> NDArray[np.float64]:
        return seeds_from_region(self.seed_region, self.spec.seeds)


@dataclass(eq=False)
class DwiVolume:
    gradients: NDArray[np.float64]  # (n, 3) unit vectors
    bvals: NDArray[np.float64]  # (n,)
    signals: NDArray[np.float64]  # (X, Y, Z, n)
    s0: float = 1.0

    def __post_init__(self) -> None:
        if self.signals.shape[-1] != len(self.gradients) or len(self.bvals) != len(self.gradients):
            raise InvalidPhantomSpecError("gradient count does not match the signal depth")


@dataclass(eq=False)
class TensorFit:
    peaks: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    fa: NDArray[np.float64]
    quality: NDArray[np.bool_]


def _unit(v: NDArray[np.float64]) -> NDArray[np.float64]:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)


def _slices(spec: PhantomSpec) -> NDArray[np.float64]:
    return (np.arange(spec.grid_dims[2]) + 0.5) * spec.voxel_size[2]


def _resample(curve: NDArray[np.float64], step: float = TRUTH_STEP) -> NDArray[np.float64]:
    """Resample a dense polyline at constant arc length."""

    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(curve, axis=0), axis=1))])
    at = np.arange(0.0, arc[-1], step)
    return np.stack([np.interp(at, arc, curve[:, axis]) for axis in range(3)], axis=-1)


def _extent(spec: PhantomSpec, axis: int) -> float:
    return spec.grid_dims[axis] * spec.voxel_size[axis]


def _crossed(truth: list[NDArray[np.float64]], spec: PhantomSpec) -> NDArray[np.bool_]:
    """Voxels visited by any ground truth point."""

    voxels = np.unique(np.floor(np.concatenate(truth) / spec.voxel_size).astype(np.int64), axis=0)
    voxels = voxels[np.all((voxels >= 0) & (voxels < spec.grid_dims), axis=1)]
    out = np.zeros(spec.grid_dims, dtype=bool)
    out[voxels[:, 0], voxels[:, 1], voxels[:, 2]] = True
    return out


def _circle(spec: PhantomSpec, centers: NDArray[np.float64]) -> dict[str, Any]:
    x_dim, y_dim, _ = spec.grid_dims
    uc, vc = x_dim / 2 * spec.voxel_size[0], y_dim / 2 * spec.voxel_size[1]
    if spec.r2 > min(uc, vc):
        raise InvalidPhantomSpecError(f"outer radius {spec.r2} mm does not fit into the grid")

    rel = centers[..., :2] - (uc, vc)
    radius = np.linalg.norm(rel, axis=-1)
    mask = (radius >= spec.r1) & (radius <= spec.r2)
    seed = mask & (rel[..., 0] > 0) & (np.abs(rel[..., 1]) < 2 * spec.voxel_size[1])

    def direction(p: NDArray[np.float64]) -> NDArray[np.float64]:
        q = np.asarray(p, dtype=np.float64)
        v = np.stack([-(q[..., 1] - vc), q[..., 0] - uc, np.zeros(q.shape[:-1])], axis=-1)
        return _unit(v)

    truth = []
    for z in _slices(spec):
        for r in np.arange(spec.r1, spec.r2 + 1e-9, TRUTH_SPACING):
            n = ceil(2 * pi * r / TRUTH_STEP)
            theta = np.linspace(0, 2 * pi, n + 1)
            truth.append(np.stack([uc + r * np.cos(theta), vc + r * np.sin(theta), np.full(n + 1, z)], axis=-1))

    return {
        "mask": mask,
        "seed": seed,
        "target": seed,
        "direction": direction,
        "truth": truth,
        "provenance": {"center": [uc, vc], "r1": spec.r1, "r2": spec.r2},
    }


def _sine(spec: PhantomSpec, centers: NDArray[np.float64]) -> dict[str, Any]:
    """
    A sine arch across the x extent, filled with vertical translates. Seed and target columns sit on the steep
    ends, where the band is thinnest across the fibers, and alpha scales the slope there linearly.
    """

    x_dim = spec.grid_dims[0]
    lx, ly = _extent(spec, 0), _extent(spec, 1)
    frequency = pi * SINE_HALF_PERIODS / lx
    kappa = SINE_SLOPE_PER_ALPHA / frequency
    amplitude = kappa * spec.alpha
    half_height = ly * SINE_HALF_HEIGHT
    y0 = (ly - amplitude) / 2
    if y0 < half_height:
        raise InvalidPhantomSpecError(f"sine band with alpha {spec.alpha} does not fit into the grid")

    def direction(p: NDArray[np.float64]) -> NDArray[np.float64]:
        q = np.asarray(p, dtype=np.float64)
        slope = amplitude * frequency * np.cos(frequency * q[..., 0])
        return _unit(np.stack([np.ones(q.shape[:-1]), slope, np.zeros(q.shape[:-1])], axis=-1))

    # stop just short of the far face so the last point still maps into the grid
    dense_x = np.linspace(0, np.nextafter(lx, 0), ceil(lx / TRUTH_STEP) * 10 + 1)
    truth = []
    for z in _slices(spec):
        for off in np.arange(-half_height, half_height + 1e-9, TRUTH_SPACING):
            y = y0 + off + amplitude * np.sin(frequency * dense_x)
            truth.append(_resample(np.stack([dense_x, y, np.full_like(dense_x, z)], axis=-1)))

    offset = centers[..., 1] - y0 - amplitude * np.sin(frequency * centers[..., 0])
    # steep flanks let the outermost curves clip voxels whose centers lie just outside the band
    mask = (np.abs(offset) <= half_height) | _crossed(truth, spec)
    seed = mask.copy()
    seed[2:] = False
    target = mask.copy()
    target[: x_dim - 2] = False

    provenance = {
        "frequency": frequency,
        "kappa": kappa,
        "amplitude": amplitude,
        "half_height": half_height,
        "end_slope": amplitude * frequency,
    }
    return {
        "mask": mask,
        "seed": seed,
        "target": target,
        "direction": direction,
        "truth": truth,
        "provenance": provenance,
    }


@dataclass(frozen=True)
class _Fan:
    """Circular arcs leaving a vertical stem, fiber u in [-1, 1] bending by HOUGH_MAX_ANGLE * |u| at the top."""

    center: float
    stem_top: float
    height: float

    def _slope(self, u: NDArray[np.float64], t: NDArray[np.float64]) -> NDArray[np.float64]:
        return t * np.sin(np.radians(HOUGH_MAX_ANGLE) * np.abs(u)) / self.height

    def _rise(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.clip(y - self.stem_top, 0, self.height)

    def x(self, u: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        t = self._rise(y)
        a = self._slope(u, t)
        return self.center + u * HOUGH_STEM_HALF_WIDTH + np.sign(u) * t * a / (1 + np.sqrt(1 - a**2))

    def fiber(self, x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        """Fiber parameter through (x, y), clipped to [-1, 1], by bisection."""

        lo, hi = np.full(np.shape(x), -1.0), np.full(np.shape(x), 1.0)
        for _ in range(60):
            mid = (lo + hi) / 2
            right = self.x(mid, y) < x
            lo, hi = np.where(right, mid, lo), np.where(right, hi, mid)
        return (lo + hi) / 2

    def tangent(self, u: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
        a = self._slope(u, self._rise(y))
        return np.stack([np.sign(u) * a, np.sqrt(1 - a**2), np.zeros(np.shape(a))], axis=-1)


def _hough(spec: PhantomSpec, centers: NDArray[np.float64]) -> dict[str, Any]:
    lx, ly = _extent(spec, 0), _extent(spec, 1)
    seed_top = HOUGH_SEED_ROWS * spec.voxel_size[1]
    theta = np.radians(HOUGH_MAX_ANGLE)
    spread = lx / 2 - 1 - HOUGH_STEM_HALF_WIDTH
    top = ly - 1
    # the widest arc ends one voxel inside the grid; a straight stem fills the rows below the fan
    height = min(spread / ((1 - np.cos(theta)) / np.sin(theta)), top - seed_top)
    if spread <= 0 or height <= 0:
        raise InvalidPhantomSpecError("grid is too small for the fan")
    stem_top = top - height
    fan = _Fan(center=lx / 2, stem_top=stem_top, height=float(height))

    def direction(p: NDArray[np.float64]) -> NDArray[np.float64]:
        q = np.asarray(p, dtype=np.float64)
        return fan.tangent(fan.fiber(q[..., 0], q[..., 1]), q[..., 1])

    dense_y = np.linspace(0, top, ceil(top / TRUTH_STEP) * 10 + 1)
    truth = []
    for z in _slices(spec):
        for u in np.linspace(-1, 1, HOUGH_FIBERS):
            x = fan.x(np.full_like(dense_y, u), dense_y)
            truth.append(_resample(np.stack([x, dense_y, np.full_like(dense_y, z)], axis=-1)))

    cx, cy = centers[..., 0], centers[..., 1]
    # boundary voxels crossed by the outermost arcs belong to the bundle even when their centers lie outside
    mask = (cy <= top) & (fan.x(np.full(cy.shape, -1.0), cy) <= cx) & (cx <= fan.x(np.ones(cy.shape), cy))
    mask |= _crossed(truth, spec)
    seed = mask & (cy < seed_top)
    # fibers end where they leave the fan; the outermost run almost flat along the top rows before they do
    tail = ceil(HOUGH_TARGET_LENGTH / TRUTH_STEP)
    target = mask & _crossed([points[-tail:] for points in truth], spec)

    provenance = {"stem_half_width": HOUGH_STEM_HALF_WIDTH, "stem_top": float(stem_top), "height": float(height)}
    return {
        "mask": mask,
        "seed": seed,
        "target": target,
        "direction": direction,
        "truth": truth,
        "provenance": provenance,
    }


def make_phantom(spec: PhantomSpec) -> Phantom:
    """Build the mask, regions, analytic direction field and ground truth of a phantom."""

    centers = grid_centers(spec.grid_dims, spec.voxel_size)
    match spec.kind:
        case PhantomKind.CIRCLE:
            parts = _circle(spec, centers)
        case PhantomKind.SINE:
            parts = _sine(spec, centers)
        case PhantomKind.HOUGH:
            parts = _hough(spec, centers)

    if not parts["seed"].any() or not parts["target"].any():
        raise InvalidPhantomSpecError(f"{spec.label} has an empty seed or target region")

    voxel_size = np.asarray(spec.voxel_size, dtype=np.float64)
    truth = Tractogram(
        [Streamline(points, StreamlineStatus.REACHED_TARGET) for points in parts["truth"]],
        step_size=TRUTH_STEP,
        provenance={"phantom": spec.label},
    )
    phantom = Phantom(
        spec=spec,
        mask=VoxelGrid(parts["mask"], voxel_size),
        seed_region=VoxelGrid(parts["seed"], voxel_size),
        target_region=VoxelGrid(parts["target"], voxel_size),
        ground_truth=truth,
        direction=parts["direction"],
        provenance={"kind": spec.kind.value, **parts["provenance"]},
    )
    logger.debug(f"{spec.label}: {int(parts['mask'].sum())} voxels, {len(truth)} ground truth streamlines")
    return phantom


def min_length(spec: PhantomSpec) -> float:
    """Shortest streamline kept for a phantom; circle streamlines must close most of a loop."""

    if spec.kind == PhantomKind.CIRCLE:
        return 2 * pi * spec.r1 - 4 * spec.voxel_size[1]
    return 5.0


def analytic_peaks(ph: Phantom) -> PeakVolume:
    """Peaks equal to the phantom's direction field at the mask voxel centers."""

    peaks = np.zeros((*ph.mask.dims, 3))
    peaks[ph.mask.data] = ph.direction(ph.mask.centers())
    return PeakVolume(ph.mask.data, peaks, ph.voxel_size)


def fibonacci_sphere(n: int) -> NDArray[np.float64]:
    """n nearly uniform unit vectors on a spherical Fibonacci lattice."""

    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z**2)
    phi = pi * (3 - np.sqrt(5)) * np.arange(n)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def add_rician(signal: NDArray[np.float64], sigma: float, rng: np.random.Generator) -> NDArray[np.float64]:
    noise = rng.normal(0.0, sigma, size=(2, *np.shape(signal)))
    return np.asarray(np.sqrt((signal + noise[0]) ** 2 + noise[1] ** 2))


def simulate_dwi(ph: Phantom, spec: PhantomSpec, rng_seed: int, s0: float = 1.0) -> DwiVolume:
    """Single-tensor signal along the phantom direction inside the mask, isotropic outside, with Rician noise."""

    gradients = fibonacci_sphere(spec.n_gradients)
    bvals = np.full(len(gradients), spec.bvalue)

    adc = np.full((*ph.mask.dims, len(gradients)), ISOTROPIC_DIFFUSIVITY)
    fiber = ph.direction(ph.mask.centers())
    l1, l2, _ = FIBER_EIGENVALUES
    adc[ph.mask.data] = l2 + (l1 - l2) * (fiber @ gradients.T) ** 2
    signals = s0 * np.exp(-bvals * adc)

    if np.isfinite(spec.snr):
        rng = np.random.Generator(np.random.Philox(rng_seed))
        signals = add_rician(signals, s0 / spec.snr, rng)
    logger.debug(f"simulated {len(gradients)} gradients at b={spec.bvalue:g}, snr={spec.snr:g}")
    return DwiVolume(gradients=gradients, bvals=bvals, signals=signals, s0=s0)


def _design(dwi: DwiVolume) -> NDArray[np.float64]:
    gx, gy, gz = dwi.gradients.T
    return -dwi.bvals[:, None] * np.stack([gx**2, gy**2, gz**2, 2 * gx * gy, 2 * gx * gz, 2 * gy * gz], axis=-1)


def _tensor(d: NDArray[np.float64]) -> NDArray[np.float64]:
    xx, yy, zz, xy, xz, yz = np.moveaxis(d, -1, 0)
    return np.stack([np.stack([xx, xy, xz], -1), np.stack([xy, yy, yz], -1), np.stack([xz, yz, zz], -1)], -2)


def fit_tensors(dwi: DwiVolume, mask: NDArray[np.bool_]) -> TensorFit:
    """Log-linear tensor fit per masked voxel: ordinary least squares refined by one weighted pass."""

    design = _design(dwi)
    log_signal = np.log(np.maximum(dwi.signals[mask], SIGNAL_FLOOR * dwi.s0) / dwi.s0)

    ols = np.linalg.lstsq(design, log_signal.T, rcond=None)[0].T
    weights = np.exp(2 * ols @ design.T)
    normal = np.einsum("ni,vn,nj->vij", design, weights, design)
    rhs = np.einsum("ni,vn,vn->vi", design, weights, log_signal)
    wls = np.linalg.solve(normal, rhs[..., None])[..., 0]

    evals, evecs = np.linalg.eigh(_tensor(wls))
    mean = evals.mean(axis=-1, keepdims=True)
    norm = np.sqrt((evals**2).sum(axis=-1))
    fa = np.sqrt(1.5 * ((evals - mean) ** 2).sum(axis=-1)) / np.where(norm > 0, norm, 1.0)

    dims = mask.shape
    out = TensorFit(
        peaks=np.zeros((*dims, 3)),
        eigenvalues=np.zeros((*dims, 3)),
        fa=np.zeros(dims),
        quality=np.zeros(dims, dtype=bool),
    )
    out.peaks[mask] = evecs[..., -1]
    out.eigenvalues[mask] = evals[..., ::-1]
    out.fa[mask] = fa
    out.quality[mask] = (fa < LOW_ANISOTROPY) | (evals[..., 0] <= 0)
    return out


def fit_peaks(dwi: DwiVolume, mask: NDArray[np.bool_], voxel_size: Any = (1.0, 1.0, 1.0)) -> PeakVolume:
    """Principal tensor eigenvectors as primary peaks; unreliable voxels are flagged in the quality mask."""

    mask = np.asarray(mask, dtype=bool)
    if dwi.signals.shape[:3] != mask.shape:
        raise InvalidPhantomSpecError(f"mask {mask.shape} does not match the signal grid {dwi.signals.shape[:3]}")
    fit = fit_tensors(dwi, mask)
    if flagged := int(fit.quality.sum()):
        logger.warning(f"{flagged} voxels with low anisotropy or a non positive definite tensor")
    return PeakVolume(mask, fit.peaks, np.asarray(voxel_size, dtype=np.float64), quality=fit.quality)
