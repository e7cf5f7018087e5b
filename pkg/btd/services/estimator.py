"""
Estimation of the BTD coefficient matrix from per-voxel peaks.

The fit minimizes ||G - A · C_n*||_F^2 (+ ridge) subject to a divergence constraint that is linear in the
flattened coefficients. The constraint is eliminated by a null-space parametrization; the remaining
unconstrained problem is reduced by a QR factorization of the design and solved for the minimum-norm
solution.
"""

import time
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .polyfield import CoordFrame, PolyField, build_basis, divergence_at, divergence_map, eval_basis, eval_field
from ..exceptions.estimator import DegenerateInputError, EmptyMaskError, EmptySeedRegionError, ShapeMismatchError
from ..exceptions.btd_exception import InvalidArgumentError
from ..logger import get_logger
from ..schemas.fit import ConstraintMode, FitConfig, FitReport, MultiPeakPolicy, SignAlignment
from ..settings import settings


logger = get_logger(__name__)

UNIT_TOLERANCE = 1e-6

_NEIGHBORS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1) if (dx, dy, dz) != (0, 0, 0)]
)


@dataclass(eq=False)
class PeakVolume:
    mask: NDArray[np.bool_]
    peaks: NDArray[np.float64]
    voxel_size: NDArray[np.float64]
    extra_peaks: NDArray[np.float64] | None = None  # (X, Y, Z, K, 3), zero rows where absent
    quality: NDArray[np.bool_] | None = None  # True where the peak is unreliable

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=bool)
        self.peaks = np.asarray(self.peaks, dtype=np.float64)
        self.voxel_size = np.asarray(self.voxel_size, dtype=np.float64).reshape(3)
        if self.mask.ndim != 3 or self.peaks.shape != (*self.mask.shape, 3):
            raise ShapeMismatchError(f"peaks {self.peaks.shape} do not match mask {self.mask.shape}")
        if self.extra_peaks is not None:
            self.extra_peaks = np.asarray(self.extra_peaks, dtype=np.float64)
            if self.extra_peaks.shape[:3] != self.mask.shape or self.extra_peaks.shape[-1] != 3:
                raise ShapeMismatchError(f"extra peaks {self.extra_peaks.shape} do not match {self.mask.shape}")
        if self.quality is not None and np.shape(self.quality) != self.mask.shape:
            raise ShapeMismatchError("quality mask does not match the peak grid")

        norms = np.linalg.norm(self.peaks[self.mask], axis=-1)
        if np.any(np.abs(norms - 1) > UNIT_TOLERANCE):
            raise InvalidArgumentError("every masked voxel needs a unit primary peak")

    @property
    def dims(self) -> tuple[int, int, int]:
        x, y, z = self.mask.shape
        return x, y, z

    def centers(self) -> NDArray[np.float64]:
        return (np.argwhere(self.mask) + 0.5) * self.voxel_size


@dataclass(eq=False)
class SignField:
    signs: NDArray[np.int8]  # +1 / -1 on masked voxels, 0 elsewhere
    fallback: NDArray[np.bool_]  # voxels signed by the reference axis because propagation never reached them

    def apply(self, peaks: NDArray[np.float64]) -> NDArray[np.float64]:
        return peaks * self.signs[..., None]


@dataclass(eq=False)
class ConstrainedSolution:
    coeffs: NDArray[np.float64]
    rank: int
    condition: float


def canonical_sign(peak: NDArray[np.float64]) -> int:
    """Orientation that makes the largest-magnitude component positive."""

    return 1 if peak[int(np.argmax(np.abs(peak)))] >= 0 else -1


def _sign_towards(vectors: NDArray[np.float64], axis: NDArray[np.float64]) -> NDArray[np.int8]:
    return np.where(vectors @ axis >= 0, 1, -1).astype(np.int8)


def align_signs(vol: PeakVolume, cfg: FitConfig, seed_region: NDArray[np.bool_]) -> SignField:
    """
    Resolve the antipodal ambiguity of the peaks.

    Propagation walks the 26-neighbourhood breadth-first from the seed voxels, flipping each newly reached
    peak so its dot product with the peak it was reached from is nonnegative. Every start voxel is oriented
    so its largest component is positive. Voxels no walk reaches are signed against the reference axis.
    """

    seed_voxels = np.argwhere(np.asarray(seed_region, dtype=bool) & vol.mask)
    if not len(seed_voxels):
        raise EmptySeedRegionError()

    signs = np.zeros(vol.dims, dtype=np.int8)
    fallback = np.zeros(vol.dims, dtype=bool)
    axis = None if cfg.reference_axis is None else np.asarray(cfg.reference_axis, dtype=np.float64)

    if cfg.sign_alignment == SignAlignment.REFERENCE_AXIS:
        assert axis is not None  # guaranteed by FitConfig
        signs[vol.mask] = _sign_towards(vol.peaks[vol.mask], axis)
        return SignField(signs, fallback)

    voxels = np.argwhere(vol.mask)
    peaks = vol.peaks[vol.mask]
    index = np.full(vol.dims, -1, dtype=np.int64)
    index[vol.mask] = np.arange(len(voxels))

    neighbors = voxels[:, None, :] + _NEIGHBORS[None, :, :]
    valid = np.all((neighbors >= 0) & (neighbors < np.array(vol.dims)), axis=-1)
    clipped = np.where(valid[..., None], neighbors, 0)
    nbr = np.where(valid, index[clipped[..., 0], clipped[..., 1], clipped[..., 2]], -1)
    dots = np.einsum("nc,nkc->nk", peaks, peaks[np.maximum(nbr, 0)])

    nbr_list: list[list[int]] = nbr.tolist()
    agree_list: list[list[bool]] = (dots >= 0).tolist()
    sign_list = [0] * len(voxels)
    for start in index[seed_voxels[:, 0], seed_voxels[:, 1], seed_voxels[:, 2]].tolist():
        if sign_list[start]:
            continue
        sign_list[start] = canonical_sign(peaks[start])
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for n, agree in zip(nbr_list[current], agree_list[current]):
                if n >= 0 and not sign_list[n]:
                    sign_list[n] = sign_list[current] if agree else -sign_list[current]
                    queue.append(n)

    flat = np.array(sign_list, dtype=np.int8)
    unreached = flat == 0
    if unreached.any():
        if axis is None:
            mean = (peaks[~unreached] * flat[~unreached, None]).sum(axis=0)
            axis = mean if np.linalg.norm(mean) > 0 else np.array([1.0, 0.0, 0.0])
        logger.warning(f"{int(unreached.sum())} voxels unreachable from the seed region, signed by reference axis")
        flat[unreached] = _sign_towards(peaks[unreached], axis)
        fallback[vol.mask] = unreached

    signs[vol.mask] = flat
    return SignField(signs, fallback)


def frame_for_mask(mask: NDArray[np.bool_], voxel_size: NDArray[np.float64]) -> CoordFrame:
    if not mask.any():
        raise EmptyMaskError()
    return CoordFrame.bounding((np.argwhere(mask) + 0.5) * voxel_size)


def assemble_system(
    vol: PeakVolume, signs: SignField, cfg: FitConfig, frame: CoordFrame | None = None
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Return the design C_n* (basis size x gamma) and the sign-aligned targets G (3 x gamma)."""

    if not vol.mask.any():
        raise EmptyMaskError()
    frame = frame or frame_for_mask(vol.mask, vol.voxel_size)
    design = eval_basis(build_basis(cfg.order), vol.centers(), frame).T
    target = signs.apply(vol.peaks)[vol.mask].T
    return design, target


def _null_space(constraint: NDArray[np.float64]) -> NDArray[np.float64]:
    if constraint.shape[0] > constraint.shape[1]:
        # tall sampled constraints: same null space, much smaller SVD
        constraint = scipy.linalg.qr(constraint, mode="r")[0][: constraint.shape[1]]
    return np.asarray(scipy.linalg.null_space(constraint))


def solve_constrained_lstsq(
    design: NDArray[np.float64],
    target: NDArray[np.float64],
    constraint: NDArray[np.float64],
    ridge: float = 0.0,
    cond: float | None = None,
) -> ConstrainedSolution:
    """
    Minimize ||target - A · design||_F^2 + ridge ||A||_F^2 subject to constraint · vec(A) = 0.

    vec(A) is A flattened row-major (x row, y row, z row). The minimum-norm solution is returned when the
    reduced system is rank deficient.
    """

    size = design.shape[0]
    null = _null_space(constraint)
    assert null.shape[1] > 0, "constraint null space is empty"

    q, r = scipy.linalg.qr(design.T, mode="economic")
    rhs = (q.T @ target.T).T.ravel()
    system = np.vstack([r @ null[axis * size : (axis + 1) * size] for axis in range(3)])
    if ridge > 0:
        system = np.vstack([system, np.sqrt(ridge) * np.eye(null.shape[1])])
        rhs = np.concatenate([rhs, np.zeros(null.shape[1])])

    z, _, rank, sv = scipy.linalg.lstsq(system, rhs, cond=settings.fit_cond if cond is None else cond)
    if rank == 0:
        raise DegenerateInputError()
    logger.debug(f"reduced system {system.shape}, null space dim {null.shape[1]}, rank {rank}")
    condition = float(sv[0] / sv[rank - 1])
    return ConstrainedSolution(coeffs=(null @ z).reshape(3, size), rank=int(rank), condition=condition)


def _reselect_peaks(vol: PeakVolume, field: PolyField, keep: NDArray[np.bool_]) -> NDArray[np.float64]:
    """Per voxel, pick the candidate peak closest in angle to the field and sign it along the field."""

    assert vol.extra_peaks is not None
    candidates = np.concatenate([vol.peaks[vol.mask][:, None, :], vol.extra_peaks[vol.mask]], axis=1)
    direction = field_direction(field, vol.centers())
    dots = np.einsum("nkc,nc->nk", candidates, direction)
    best = np.argmax(np.abs(dots), axis=1)
    rows = np.arange(len(best))
    chosen = candidates[rows, best] * np.where(dots[rows, best] >= 0, 1.0, -1.0)[:, None]
    return chosen[keep].T


def data_voxels(vol: PeakVolume, cfg: FitConfig) -> NDArray[np.bool_]:
    """Which masked voxels (in mask order) enter the data term."""

    keep = np.ones(int(vol.mask.sum()), dtype=bool)
    if cfg.exclude_flagged and vol.quality is not None:
        keep = ~np.asarray(vol.quality, dtype=bool)[vol.mask]
        if not keep.any():
            raise DegenerateInputError("every masked voxel is flagged by the quality mask")
    return keep


def field_direction(field: PolyField, points: NDArray[np.float64]) -> NDArray[np.float64]:
    v = eval_field(field, points)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, norms, out=np.zeros_like(v), where=norms > 0)


def fit_btd(vol: PeakVolume, seed_region: NDArray[np.bool_], cfg: FitConfig) -> tuple[PolyField, FitReport]:
    """Fit the divergence-constrained polynomial field of order cfg.order to the bundle's peaks."""

    start = time.perf_counter()
    frame = frame_for_mask(vol.mask, vol.voxel_size)
    signs = align_signs(vol, cfg, seed_region)
    design, target = assemble_system(vol, signs, cfg, frame=frame)
    keep = data_voxels(vol, cfg)
    design, target = design[:, keep], target[:, keep]
    gamma = design.shape[1]
    if gamma < len(keep):
        logger.info(f"leaving {len(keep) - gamma} flagged voxels out of the fit")

    dmap = divergence_map(cfg.order, frame.scale)
    constraint = dmap.matrix
    if cfg.constraint_mode == ConstraintMode.SAMPLED:
        constraint = eval_basis(dmap.basis, vol.centers(), frame) @ dmap.matrix

    ridge = 1e-8 * gamma if cfg.regularization is None else cfg.regularization
    logger.debug(f"fitting order {cfg.order}: {design.shape[0]} monomials, {gamma} voxels, ridge {ridge:g}")
    solution = solve_constrained_lstsq(design, target, constraint, ridge)
    iterations = 1

    if cfg.multi_peak_policy == MultiPeakPolicy.NEAREST_TO_FIELD and vol.extra_peaks is not None:
        for _ in range(cfg.iterations):
            target = _reselect_peaks(vol, PolyField(cfg.order, solution.coeffs, frame), keep)
            solution = solve_constrained_lstsq(design, target, constraint, ridge)
            iterations += 1

    field = PolyField(cfg.order, solution.coeffs, frame)
    residual = float(np.sum((target - solution.coeffs @ design) ** 2))
    report = FitReport(
        order=cfg.order,
        residual=residual,
        objective=residual + ridge * float(np.sum(solution.coeffs**2)),
        max_divergence=float(np.max(np.abs(divergence_at(field, vol.centers())))),
        condition_estimate=solution.condition,
        rank=solution.rank,
        iterations_used=iterations,
        n_voxels=gamma,
        n_excluded=len(keep) - gamma,
        elapsed=time.perf_counter() - start,
    )
    logger.info(f"order {cfg.order} fit: residual {report.residual:.6g}, max |div| {report.max_divergence:.3g}")
    return field, report
