from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .phantom import Phantom
from .tracer import Tractogram
from ..exceptions.btd_exception import InvalidArgumentError
from ..logger import get_logger
from ..schemas.phantom import PhantomKind
from ..schemas.score import MetricConfig, ScoreReport
from ..utils.grid import VoxelGrid


logger = get_logger(__name__)


def _visited(t: Tractogram, voxel_size: NDArray[np.float64]) -> NDArray[np.int64]:
    if not len(t):
        return np.zeros((0, 3), dtype=np.int64)
    points = np.concatenate([sl.points for sl in t.streamlines])
    return np.unique(np.floor(points / voxel_size).astype(np.int64), axis=0)


def score_vc(
    t: Tractogram, seed_region: VoxelGrid, target_region: VoxelGrid, mask: VoxelGrid, dilation: int = 1
) -> tuple[float, int]:
    """Fraction of streamlines starting in the seed region, ending in the target and staying in the dilated mask."""

    if not seed_region.data.any() or not target_region.data.any():
        raise InvalidArgumentError("seed and target regions must not be empty")
    if not len(t):
        logger.warning("scoring an empty tractogram")
        return 0.0, 0

    allowed = mask.dilated(dilation)
    valid = sum(
        bool(seed_region.contains(sl.points[:1])[0])
        and bool(target_region.contains(sl.points[-1:])[0])
        and bool(allowed.contains(sl.points).all())
        for sl in t.streamlines
    )
    return valid / len(t), valid


def score_ol_or(t: Tractogram, truth_mask: VoxelGrid, eval_dilation: int = 1) -> tuple[float, float]:
    """
    Bundle overlap and overreach from the voxels hit by streamline points.

    Visited voxels outside the grid count as overreach.
    """

    n_truth = int(truth_mask.data.sum())
    if not n_truth:
        raise InvalidArgumentError("truth mask must not be empty")

    visited = _visited(t, truth_mask.voxel_size)
    inside = truth_mask.in_bounds(visited)
    hit = visited[inside]
    in_truth = truth_mask.data[hit[:, 0], hit[:, 1], hit[:, 2]]
    in_dilated = truth_mask.dilated(eval_dilation).data[hit[:, 0], hit[:, 1], hit[:, 2]]

    overlap = int(in_truth.sum()) / n_truth
    overreach = (int((~in_dilated).sum()) + int((~inside).sum())) / n_truth
    return overlap, overreach


def score_deviation(
    t: Tractogram,
    center: ArrayLike,
    seeds: Sequence[ArrayLike | None] | None = None,
    voxel_size: float = 1.0,
    signed: bool = False,
) -> float:
    """
    Mean in-plane radial error, in voxels, of the streamline points against the circle through their seed.

    Seeds default to the first point of every streamline. Streamlines without a usable seed are skipped.
    Returns nan if nothing could be scored.
    """

    if seeds is not None and len(seeds) != len(t):
        raise InvalidArgumentError(f"got {len(seeds)} seeds for {len(t)} streamlines")
    c = np.asarray(center, dtype=np.float64)[:2]

    total, count, unknown = 0.0, 0, 0
    for j, sl in enumerate(t.streamlines):
        seed = sl.points[0] if seeds is None else seeds[j]
        if seed is None or not np.all(np.isfinite(np.asarray(seed, dtype=np.float64))):
            unknown += 1
            continue
        radius = np.linalg.norm(np.asarray(seed, dtype=np.float64)[:2] - c)
        errors = np.linalg.norm(sl.points[:, :2] - c, axis=1) - radius
        total += float(errors.sum() if signed else np.abs(errors).sum())
        count += len(sl)

    if unknown:
        logger.warning(f"{unknown} streamlines without a known seed excluded from the deviation")
    return total / count / voxel_size if count else float("nan")


def score(t: Tractogram, ph: Phantom, cfg: MetricConfig | None = None) -> ScoreReport:
    """All metrics of a tractogram against its phantom; deviation only for circle phantoms."""

    cfg = cfg or MetricConfig()
    vc, n_valid = score_vc(t, ph.seed_region, ph.target_region, ph.mask, cfg.dilation)
    ol, or_ = score_ol_or(t, ph.mask, cfg.dilation)

    deviation = None
    if ph.spec.kind == PhantomKind.CIRCLE:
        value = score_deviation(t, ph.provenance["center"], voxel_size=ph.voxel_size[0], signed=cfg.signed_deviation)
        deviation = None if np.isnan(value) else value

    report = ScoreReport(vc=vc, ol=ol, or_=or_, deviation=deviation, n_streamlines=len(t), n_valid=n_valid)
    logger.info(f"{ph.spec.label}: vc={vc:.3f} ol={ol:.3f} or={or_:.3f} deviation={deviation}")
    return report
