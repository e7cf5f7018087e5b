import numpy as np
import pytest
import scipy.linalg
from pytest_mock import MockerFixture

from .._utils import angle_deg, straight_volume
from btd.exceptions.btd_exception import InvalidArgumentError
from btd.exceptions.estimator import DegenerateInputError, EmptyMaskError, EmptySeedRegionError, ShapeMismatchError
from btd.schemas.fit import ConstraintMode, FitConfig, MultiPeakPolicy, SignAlignment
from btd.schemas.phantom import PhantomSpec
from btd.services.estimator import (
    PeakVolume,
    align_signs,
    assemble_system,
    canonical_sign,
    field_direction,
    fit_btd,
    solve_constrained_lstsq,
)
from btd.services.phantom import Phantom, analytic_peaks, fit_peaks, make_phantom, simulate_dwi
from btd.services.polyfield import CoordFrame, build_basis, divergence_at, divergence_map, eval_basis, eval_field


def seed_slab(dims: tuple[int, int, int], width: int = 2) -> np.ndarray:
    seeds = np.zeros(dims, dtype=bool)
    seeds[:width] = True
    return seeds


async def test__peak_volume__validation() -> None:
    mask = np.ones((2, 2, 2), dtype=bool)

    with pytest.raises(ShapeMismatchError):
        PeakVolume(mask, np.zeros((2, 2, 3, 3)), np.ones(3))
    with pytest.raises(InvalidArgumentError):
        PeakVolume(mask, np.full((2, 2, 2, 3), 0.5), np.ones(3))
    with pytest.raises(ShapeMismatchError):
        PeakVolume(mask, np.tile([1.0, 0, 0], (2, 2, 2, 1)), np.ones(3), extra_peaks=np.zeros((2, 2, 2, 1, 2)))


async def test__peak_volume__unmasked_peaks_unchecked() -> None:
    mask = np.zeros((2, 1, 1), dtype=bool)
    mask[0] = True
    peaks = np.zeros((2, 1, 1, 3))
    peaks[0, 0, 0] = [0, 0, 1]

    vol = PeakVolume(mask, peaks, np.ones(3))

    assert vol.dims == (2, 1, 1)
    assert vol.centers().tolist() == [[0.5, 0.5, 0.5]]


@pytest.mark.parametrize("peak,sign", [([1, 0, 0], 1), ([-1, 0, 0], -1), ([0.1, -0.9, 0.4], -1), ([-0.5, 0.1, 0.6], 1)])
async def test__canonical_sign(peak: list[float], sign: int) -> None:
    assert canonical_sign(np.array(peak)) == sign


async def test__align_signs__propagation() -> None:
    vol = straight_volume(flip_seed=7)

    signs = align_signs(vol, FitConfig(), seed_slab(vol.dims))

    assert np.allclose(signs.apply(vol.peaks)[vol.mask], [1.0, 0.0, 0.0])
    assert not signs.fallback.any()


async def test__align_signs__follows_a_bend() -> None:
    # quarter circle around the origin in the xy plane: propagation must follow the rotation
    dims = (12, 12, 1)
    centers = (np.argwhere(np.ones(dims, dtype=bool)) + 0.5).reshape(*dims, 3)
    radius = np.linalg.norm(centers[..., :2], axis=-1)
    mask = (radius > 6) & (radius < 11)
    tangent = np.stack([-centers[..., 1], centers[..., 0], np.zeros(dims)], axis=-1) / radius[..., None]
    flips = np.random.default_rng(3).choice([-1.0, 1.0], size=dims)
    vol = PeakVolume(mask, tangent * flips[..., None], np.ones(3))
    seeds = mask & (centers[..., 1] < 2)

    aligned = align_signs(vol, FitConfig(), seeds).apply(vol.peaks)

    dots = np.sum(aligned[mask] * tangent[mask], axis=-1)
    assert np.all(dots > 0) or np.all(dots < 0)


async def test__align_signs__unreachable_voxels_use_fallback(mocker: MockerFixture) -> None:
    logger_patch = mocker.patch("btd.services.estimator.logger")
    vol = straight_volume(flip_seed=11)
    vol.mask[4:6] = False

    signs = align_signs(vol, FitConfig(), seed_slab(vol.dims))

    assert signs.fallback.sum() == 4 * 16
    assert signs.fallback[6:].all()
    assert np.allclose(signs.apply(vol.peaks)[vol.mask], [1.0, 0.0, 0.0])
    logger_patch.warning.assert_called_once()


async def test__align_signs__reference_axis() -> None:
    vol = straight_volume(flip_seed=5)
    cfg = FitConfig(sign_alignment=SignAlignment.REFERENCE_AXIS, reference_axis=(-1.0, 0.2, 0.0))

    signs = align_signs(vol, cfg, seed_slab(vol.dims))

    assert np.allclose(signs.apply(vol.peaks)[vol.mask], [-1.0, 0.0, 0.0])


async def test__align_signs__empty_seed_region() -> None:
    vol = straight_volume()

    with pytest.raises(EmptySeedRegionError):
        align_signs(vol, FitConfig(), np.zeros(vol.dims, dtype=bool))


async def test__fit_config__reference_axis_required() -> None:
    with pytest.raises(ValueError):
        FitConfig(sign_alignment=SignAlignment.REFERENCE_AXIS)
    with pytest.raises(ValueError):
        FitConfig(reference_axis=(0.0, 0.0, 0.0))


async def test__assemble_system__shapes() -> None:
    vol = straight_volume((6, 5, 4))
    cfg = FitConfig(order=3)
    signs = align_signs(vol, cfg, seed_slab(vol.dims))

    design, target = assemble_system(vol, signs, cfg)

    assert design.shape == (20, 120)
    assert target.shape == (3, 120)
    assert np.allclose(design[-1], 1.0)


def kkt_solution(design: np.ndarray, target: np.ndarray, constraint: np.ndarray) -> np.ndarray:
    size = design.shape[0]
    m = scipy.linalg.block_diag(design.T, design.T, design.T)
    kkt = np.block([[m.T @ m, constraint.T], [constraint, np.zeros((len(constraint), len(constraint)))]])
    rhs = np.concatenate([m.T @ target.ravel(), np.zeros(len(constraint))])
    return np.linalg.solve(kkt, rhs)[: 3 * size].reshape(3, size)


@pytest.mark.parametrize("seed", range(50))
async def test__solve_constrained_lstsq__matches_kkt(seed: int) -> None:
    rng = np.random.default_rng(seed)
    order = int(rng.integers(1, 4))
    size = build_basis(order).size
    points = rng.uniform(-1, 1, size=(int(rng.integers(2 * size, 2 * size + 21)), 3))
    design = eval_basis(build_basis(order), points, CoordFrame.identity()).T
    target = rng.normal(size=(3, len(points)))
    constraint = divergence_map(order).matrix

    solution = solve_constrained_lstsq(design, target, constraint)

    assert np.max(np.abs(solution.coeffs - kkt_solution(design, target, constraint))) < 1e-8
    assert np.allclose(constraint @ solution.coeffs.ravel(), 0, atol=1e-10)


async def test__solve_constrained_lstsq__rank_zero() -> None:
    design = np.zeros((4, 10))
    target = np.ones((3, 10))

    with pytest.raises(DegenerateInputError):
        solve_constrained_lstsq(design, target, divergence_map(1).matrix)


async def test__fit_btd__constant_field() -> None:
    vol = straight_volume((6, 5, 4), flip_seed=1)

    field, report = fit_btd(vol, seed_slab(vol.dims), FitConfig(order=5, regularization=0))

    assert report.residual < 1e-10
    assert report.max_divergence < 1e-8
    assert report.n_voxels == 120
    assert report.iterations_used == 1
    assert np.allclose(eval_field(field, vol.centers()), [1.0, 0.0, 0.0], atol=1e-6)


async def test__fit_btd__empty_mask() -> None:
    vol = straight_volume((4, 2, 2))
    vol.mask[:] = False

    with pytest.raises(EmptyMaskError):
        fit_btd(vol, seed_slab(vol.dims), FitConfig())


async def test__fit_btd__seed_region_outside_mask() -> None:
    vol = straight_volume((4, 2, 2))
    vol.mask[:2] = False

    with pytest.raises(EmptySeedRegionError):
        fit_btd(vol, seed_slab(vol.dims), FitConfig())


async def test__fit_btd__divergence_free(circle_phantom: Phantom) -> None:
    vol = analytic_peaks(circle_phantom)
    rng = np.random.default_rng(0)

    field, report = fit_btd(vol, circle_phantom.seed_region.data, FitConfig(order=4))

    centers = vol.centers()
    points = rng.uniform(centers.min(axis=0), centers.max(axis=0), size=(1000, 3))
    assert report.max_divergence < 1e-8
    assert np.max(np.abs(divergence_at(field, points))) < 1e-8


async def test__fit_btd__residual_decreases_with_order(circle_phantom: Phantom) -> None:
    vol = analytic_peaks(circle_phantom)
    seeds = circle_phantom.seed_region.data

    residuals = [fit_btd(vol, seeds, FitConfig(order=n, regularization=0))[1].residual for n in range(1, 6)]

    assert all(b <= a * (1 + 1e-6) + 1e-9 for a, b in zip(residuals, residuals[1:]))
    assert residuals[-1] < residuals[0]


async def test__fit_btd__circle_directions(circle_phantom: Phantom) -> None:
    vol = analytic_peaks(circle_phantom)

    field, report = fit_btd(vol, circle_phantom.seed_region.data, FitConfig(order=5))

    errors = angle_deg(field_direction(field, vol.centers()), vol.peaks[vol.mask])
    assert np.median(errors) < 1.0
    assert report.rank > 0
    assert report.condition_estimate >= 1


async def test__fit_btd__perturbation_increases_residual() -> None:
    vol = straight_volume((6, 5, 4), flip_seed=2)
    vol.peaks[3, 2, 1] = [0.6, 0.8, 0.0]
    cfg = FitConfig(order=2, regularization=0)
    field, report = fit_btd(vol, seed_slab(vol.dims), cfg)
    signs = align_signs(vol, cfg, seed_slab(vol.dims))
    design, target = assemble_system(vol, signs, cfg, frame=field.frame)
    null = scipy.linalg.null_space(divergence_map(2, field.frame.scale).matrix)
    rng = np.random.default_rng(0)

    for _ in range(10):
        direction = (null @ rng.normal(size=null.shape[1])).reshape(3, -1)
        perturbed = field.coeffs + 1e-3 * direction
        assert np.sum((target - perturbed @ design) ** 2) >= report.residual - 1e-12


async def test__fit_btd__sampled_constraint() -> None:
    vol = straight_volume((6, 5, 4), flip_seed=4)
    cfg = FitConfig(order=3, constraint_mode=ConstraintMode.SAMPLED, regularization=0)

    _, report = fit_btd(vol, seed_slab(vol.dims), cfg)

    assert report.residual < 1e-10
    assert report.max_divergence < 1e-8


async def test__fit_btd__nearest_to_field() -> None:
    vol = straight_volume((8, 5, 4), flip_seed=6)
    extra = np.zeros((*vol.dims, 1, 3))
    corrupted = np.zeros(vol.dims, dtype=bool)
    corrupted[3:5, 1:3, 1:3] = True
    vol.peaks[corrupted] = [0.0, 1.0, 0.0]
    extra[corrupted, 0] = [-1.0, 0.0, 0.0]
    vol.extra_peaks = extra
    seeds = seed_slab(vol.dims)

    _, primary = fit_btd(vol, seeds, FitConfig(order=2, regularization=0))
    cfg = FitConfig(order=2, regularization=0, multi_peak_policy=MultiPeakPolicy.NEAREST_TO_FIELD, iterations=2)
    _, nearest = fit_btd(vol, seeds, cfg)

    assert primary.residual > 1
    assert nearest.residual < 1e-10
    assert nearest.iterations_used == 3


async def test__fit_btd__exclude_flagged() -> None:
    vol = straight_volume((8, 5, 4), flip_seed=8)
    flagged = np.zeros(vol.dims, dtype=bool)
    flagged[3:5, 1:3, 1:3] = True
    vol.peaks[flagged] = [0.6, 0.8, 0.0]
    vol.quality = flagged
    seeds = seed_slab(vol.dims)

    _, kept = fit_btd(vol, seeds, FitConfig(order=2, regularization=0))
    field, excluded = fit_btd(vol, seeds, FitConfig(order=2, regularization=0, exclude_flagged=True))

    assert kept.residual > 0.5
    assert kept.n_excluded == 0
    assert excluded.residual < 1e-10
    assert excluded.n_voxels == 152
    assert excluded.n_excluded == 8
    assert np.allclose(field_direction(field, vol.centers()), [1.0, 0.0, 0.0], atol=1e-6)


async def test__fit_btd__exclude_flagged_without_quality() -> None:
    vol = straight_volume((6, 5, 4), flip_seed=9)

    _, report = fit_btd(vol, seed_slab(vol.dims), FitConfig(order=2, exclude_flagged=True))

    assert report.n_voxels == 120
    assert report.n_excluded == 0


async def test__fit_btd__every_voxel_flagged() -> None:
    vol = straight_volume((4, 2, 2))
    vol.quality = np.ones(vol.dims, dtype=bool)

    with pytest.raises(DegenerateInputError):
        fit_btd(vol, seed_slab(vol.dims), FitConfig(exclude_flagged=True))


@pytest.mark.parametrize("order", [5, 6])
@pytest.mark.parametrize("alpha", [0.1, 0.2, 0.3, 0.4])
async def test__fit_btd__sine_arch_directions(alpha: float, order: int) -> None:
    ph = make_phantom(PhantomSpec(kind="sine", alpha=alpha))
    vol = analytic_peaks(ph)

    field, _ = fit_btd(vol, ph.seed_region.data, FitConfig(order=order))

    errors = angle_deg(field_direction(field, vol.centers()), vol.peaks[vol.mask])
    assert np.median(errors) < 5.0


@pytest.mark.slow
async def test__fit_btd__translation_equivariant(circle_phantom: Phantom) -> None:
    vol = analytic_peaks(circle_phantom)
    pad = ((3, 0), (2, 0), (1, 0))
    shifted = PeakVolume(np.pad(vol.mask, pad), np.pad(vol.peaks, (*pad, (0, 0))), vol.voxel_size)
    seeds = circle_phantom.seed_region.data
    points = np.random.default_rng(1).uniform([35, 15, 0], [50, 45, 6], size=(500, 3))

    field, _ = fit_btd(vol, seeds, FitConfig(order=4))
    moved, _ = fit_btd(shifted, np.pad(seeds, pad), FitConfig(order=4))

    assert np.allclose(eval_field(moved, points + [3.0, 2.0, 1.0]), eval_field(field, points), rtol=0, atol=1e-8)


@pytest.mark.slow
async def test__fit_btd__hough_runtime(hough_phantom: Phantom) -> None:
    dwi = simulate_dwi(hough_phantom, hough_phantom.spec.copy(update={"snr": 10.0}), 0)
    vol = fit_peaks(dwi, hough_phantom.mask.data)

    _, report = fit_btd(vol, hough_phantom.seed_region.data, FitConfig(order=5))

    assert report.elapsed <= 30.0
    assert report.n_voxels == int(hough_phantom.mask.data.sum())
