from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.ndimage import binary_dilation, generate_binary_structure


def dilate(mask: NDArray[np.bool_], radius: int = 1) -> NDArray[np.bool_]:
    """6-connected binary dilation, `radius` iterations."""

    if radius <= 0:
        return mask.astype(bool, copy=True)
    structure = generate_binary_structure(3, 1)
    return np.asarray(binary_dilation(mask, structure=structure, iterations=radius), dtype=bool)


@dataclass(eq=False)
class VoxelGrid:
    """A boolean voxel set together with the voxel size (mm) that places it in space."""

    data: NDArray[np.bool_]
    voxel_size: NDArray[np.float64] = field(default_factory=lambda: np.ones(3))

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=bool)
        self.voxel_size = np.asarray(self.voxel_size, dtype=np.float64).reshape(3)

    @property
    def dims(self) -> tuple[int, int, int]:
        x, y, z = self.data.shape
        return x, y, z

    def voxel_of(self, points: ArrayLike) -> NDArray[np.int64]:
        return np.floor(np.asarray(points, dtype=np.float64) / self.voxel_size).astype(np.int64)

    def in_bounds(self, voxels: NDArray[np.int64]) -> NDArray[np.bool_]:
        return np.all((voxels >= 0) & (voxels < np.array(self.dims)), axis=-1)

    def contains(self, points: ArrayLike) -> NDArray[np.bool_]:
        """True for every point whose containing voxel belongs to the set."""

        voxels = self.voxel_of(points)
        inside = self.in_bounds(voxels)
        out = np.zeros(inside.shape, dtype=bool)
        hit = voxels[inside]
        out[inside] = self.data[hit[:, 0], hit[:, 1], hit[:, 2]]
        return out

    def centers(self) -> NDArray[np.float64]:
        """Centers of the set's voxels in np.argwhere order, shape (N, 3)."""

        return (np.argwhere(self.data) + 0.5) * self.voxel_size

    def dilated(self, radius: int = 1) -> "VoxelGrid":
        return VoxelGrid(dilate(self.data, radius), self.voxel_size)

    def like(self, data: NDArray[np.bool_]) -> "VoxelGrid":
        return VoxelGrid(data, self.voxel_size)


def grid_centers(dims: tuple[int, int, int], voxel_size: ArrayLike) -> NDArray[np.float64]:
    """Centers of every voxel of a grid, shape (X, Y, Z, 3)."""

    axes = [(np.arange(n) + 0.5) * s for n, s in zip(dims, np.asarray(voxel_size, dtype=np.float64))]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
