"""
Streamline integration.

Both trackers advance every live seed at once and record per step only the rows that are still active.
Streamlines are regrouped in seed order when the last one terminates.
"""

from dataclasses import dataclass, field as dataclass_field
from typing import Any, Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .estimator import PeakVolume, canonical_sign
from .polyfield import PolyField, eval_field
from ..exceptions.btd_exception import InvalidArgumentError
from ..logger import get_logger
from ..schemas.trace import StreamlineStatus, TraceConfig
from ..utils.grid import VoxelGrid


logger = get_logger(__name__)

STALL_THRESHOLD = 1e-12

Direction = Callable[[NDArray[np.float64]], NDArray[np.float64]]
Step = tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]

# (points, previous directions) -> (next points, step directions, stalled)
Advance = Callable[[NDArray[np.float64], NDArray[np.float64]], Step]


@dataclass(eq=False)
class Streamline:
    points: NDArray[np.float64]
    status: StreamlineStatus

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def __len__(self) -> int:
        return len(self.points)


@dataclass(eq=False)
class Tractogram:
    streamlines: list[Streamline]
    step_size: float
    provenance: dict[str, Any] = dataclass_field(default_factory=dict)
    discarded: dict[StreamlineStatus, int] = dataclass_field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.streamlines)

    def status_counts(self) -> dict[StreamlineStatus, int]:
        counts = {status: 0 for status in StreamlineStatus}
        for sl in self.streamlines:
            counts[sl.status] += 1
        return counts


def _direction(field: PolyField, normalize: bool) -> Direction:
    def d(p: NDArray[np.float64]) -> NDArray[np.float64]:
        v = eval_field(field, p)
        if not normalize:
            return v
        norms = np.linalg.norm(v, axis=-1, keepdims=True)
        return np.divide(v, norms, out=np.zeros_like(v), where=norms >= STALL_THRESHOLD)

    return d


def _rk4(d: Direction, p: NDArray[np.float64], h: float) -> NDArray[np.float64]:
    k1 = d(p)
    k2 = d(p + h / 2 * k1)
    k3 = d(p + h / 2 * k2)
    k4 = d(p + h * k3)
    return p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_step(field: PolyField, p: ArrayLike, h: float, normalize: bool = True) -> NDArray[np.float64] | None:
    """One classical RK4 step of dp/dt = v(p). Returns None when the field vanishes at p."""

    if h <= 0:
        raise InvalidArgumentError("step size must be positive")
    point = np.asarray(p, dtype=np.float64)
    if np.linalg.norm(eval_field(field, point)) < STALL_THRESHOLD:
        return None
    return _rk4(_direction(field, normalize), point, h)


def _integrate(
    seeds: NDArray[np.float64], mask: VoxelGrid, cfg: TraceConfig, target: VoxelGrid | None, advance: Advance
) -> list[Streamline]:
    n = len(seeds)
    status: list[StreamlineStatus | None] = [None] * n
    position = seeds.copy()
    previous = np.zeros_like(seeds)
    armed = np.ones(n, dtype=bool) if target is None else ~target.contains(seeds)

    history_ids = [np.arange(n)]
    history_points = [seeds.copy()]
    active = np.flatnonzero(mask.contains(seeds))
    for i in np.setdiff1d(np.arange(n), active):
        status[i] = StreamlineStatus.EXITED_MASK

    for step in range(1, cfg.max_steps + 1):
        if not len(active):
            break
        nxt, direction, stalled = advance(position[active], previous[active])
        stalled |= ~np.all(np.isfinite(nxt), axis=1)
        exited = ~stalled & ~mask.contains(np.where(stalled[:, None], 0.0, nxt))
        for i in active[stalled]:
            status[i] = StreamlineStatus.STALLED
        for i in active[exited]:
            status[i] = StreamlineStatus.EXITED_MASK

        moving = ~(stalled | exited)
        active, nxt, direction = active[moving], nxt[moving], direction[moving]
        position[active] = nxt
        previous[active] = direction
        history_ids.append(active)
        history_points.append(nxt)

        if target is not None and len(active):
            inside = target.contains(nxt)
            reached = inside & armed[active]
            armed[active[~inside]] = True
            for i in active[reached]:
                status[i] = StreamlineStatus.REACHED_TARGET
            active = active[~reached]
        if step == cfg.max_steps:
            for i in active:
                status[i] = StreamlineStatus.MAX_STEPS

    ids = np.concatenate(history_ids)
    points = np.concatenate(history_points)
    order = np.argsort(ids, kind="stable")
    groups = np.split(points[order], np.cumsum(np.bincount(ids, minlength=n))[:-1])
    return [Streamline(group, s or StreamlineStatus.MAX_STEPS) for group, s in zip(groups, status)]


def _finish(streamlines: list[Streamline], cfg: TraceConfig, provenance: dict[str, Any]) -> Tractogram:
    min_length = cfg.min_length or 0.0
    kept, discarded = [], {status: 0 for status in StreamlineStatus}
    for sl in streamlines:
        if len(sl) < 2 or sl.length < min_length:
            discarded[sl.status] += 1
        else:
            kept.append(sl)
    if len(kept) < len(streamlines):
        dropped = len(streamlines) - len(kept)
        logger.debug(f"discarded {dropped} of {len(streamlines)} streamlines shorter than {min_length} mm")
    return Tractogram(kept, cfg.step_size, provenance, discarded)


def _as_seeds(seeds: ArrayLike) -> NDArray[np.float64]:
    out = np.asarray(seeds, dtype=np.float64).reshape(-1, 3)
    if not len(out):
        raise InvalidArgumentError("at least one seed is required")
    return out


def trace(
    field: PolyField,
    seeds: ArrayLike,
    mask: VoxelGrid,
    cfg: TraceConfig,
    target: VoxelGrid | None = None,
    provenance: dict[str, Any] | None = None,
) -> Tractogram:
    """
    Integrate every seed forward through the field with RK4 until it leaves the mask, reaches the target
    region, stalls or runs out of steps. Streamlines start in the seed point; the point that left the mask
    is not recorded. A streamline starting inside the target has to leave it before it can reach it.
    """

    d = _direction(field, cfg.normalize_field)
    h = cfg.step_size

    def advance(p: NDArray[np.float64], _: NDArray[np.float64]) -> Step:
        stalled = np.linalg.norm(eval_field(field, p), axis=1) < STALL_THRESHOLD
        nxt = _rk4(d, p, h)
        return nxt, nxt - p, stalled

    points = _as_seeds(seeds)
    logger.info(f"tracing {len(points)} seeds, step {h} mm")
    return _finish(_integrate(points, mask, cfg, target, advance), cfg, provenance or {"tracker": "btd"})


def trace_baseline(
    vol: PeakVolume,
    seeds: ArrayLike,
    mask: VoxelGrid,
    cfg: TraceConfig,
    target: VoxelGrid | None = None,
    provenance: dict[str, Any] | None = None,
) -> Tractogram:
    """Deterministic Euler tracking along the nearest voxel's peak, signed to continue the previous step."""

    grid = VoxelGrid(vol.mask, vol.voxel_size)
    cos_limit = np.cos(np.radians(cfg.max_angle_per_step))
    h = cfg.step_size

    def advance(p: NDArray[np.float64], previous: NDArray[np.float64]) -> Step:
        voxels = grid.voxel_of(p)
        inside = grid.in_bounds(voxels)
        clipped = np.where(inside[:, None], voxels, 0)
        peak = np.where(inside[:, None], vol.peaks[clipped[:, 0], clipped[:, 1], clipped[:, 2]], 0.0)

        first = ~np.any(previous, axis=1)
        dots = np.einsum("nc,nc->n", peak, previous)
        flip = np.where(first, [canonical_sign(v) for v in peak], np.where(dots < 0, -1, 1))
        peak = peak * flip[:, None]

        norms = np.linalg.norm(peak, axis=1)
        stalled = norms < STALL_THRESHOLD
        turned = ~first & (np.abs(dots) < cos_limit * np.maximum(norms, STALL_THRESHOLD))
        return p + h * peak, peak, stalled | turned

    points = _as_seeds(seeds)
    logger.info(f"baseline tracking {len(points)} seeds, step {h} mm")
    return _finish(_integrate(points, mask, cfg, target, advance), cfg, provenance or {"tracker": "baseline"})


def seeds_from_region(region: VoxelGrid, count: int) -> NDArray[np.float64]:
    """
    Deterministic seeds spread evenly over a voxel set.

    Voxel centers are used while there are enough voxels; otherwise every voxel is split into k^3 sub-voxels
    and the sub-voxel centers are sampled.
    """

    if count < 1:
        raise InvalidArgumentError("seed count must be positive")
    voxels = np.argwhere(region.data)
    if not len(voxels):
        raise InvalidArgumentError("seed region is empty")

    k = 1
    while len(voxels) * k**3 < count:
        k += 1
    offsets = (np.stack(np.meshgrid(*[np.arange(k)] * 3, indexing="ij"), axis=-1).reshape(-1, 3) + 0.5) / k
    candidates = ((voxels[:, None, :] + offsets[None, :, :]).reshape(-1, 3)) * region.voxel_size
    picks = np.floor(np.arange(count) * len(candidates) / count).astype(np.int64)
    return candidates[picks]
