from unittest.mock import MagicMock

import numpy as np
from numpy.typing import ArrayLike, NDArray

from btd.services.estimator import PeakVolume
from btd.services.polyfield import PolyField
from btd.services.tracer import Streamline, Tractogram
from btd.schemas.trace import StreamlineStatus


def mock_list(size: int) -> list[MagicMock]:
    return [MagicMock() for _ in range(size)]


def mock_dict(size: int, string_keys: bool = False) -> dict[MagicMock | str, MagicMock]:
    return {(str(MagicMock()) if string_keys else MagicMock()): MagicMock() for _ in range(size)}


def angle_deg(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Unsigned angle between (rows of) a and b, ignoring orientation."""

    a_, b_ = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    cos = np.abs(np.sum(a_ * b_, axis=-1)) / np.linalg.norm(a_, axis=-1) / np.linalg.norm(b_, axis=-1)
    return np.degrees(np.arccos(np.clip(cos, 0, 1)))


def constant_field(direction: ArrayLike, order: int = 1) -> PolyField:
    field = PolyField.zeros(order)
    coeffs = field.coeffs.copy()
    coeffs[:, -1] = direction  # the constant monomial comes last
    return PolyField(order, coeffs)


def rotation_field(center: tuple[float, float] = (0.0, 0.0)) -> PolyField:
    """v = (-(y - vc), x - uc, 0) over the order 1 basis [x, y, z, 1]."""

    uc, vc = center
    return PolyField(1, np.array([[0.0, -1.0, 0.0, vc], [1.0, 0.0, 0.0, -uc], [0.0, 0.0, 0.0, 0.0]]))


def straight_volume(dims: tuple[int, int, int] = (10, 4, 4), flip_seed: int | None = None) -> PeakVolume:
    """Peaks along +x everywhere, optionally with random antipodal flips."""

    peaks = np.zeros((*dims, 3))
    peaks[..., 0] = 1.0
    if flip_seed is not None:
        flips = np.random.default_rng(flip_seed).choice([-1.0, 1.0], size=dims)
        peaks *= flips[..., None]
    return PeakVolume(np.ones(dims, dtype=bool), peaks, np.ones(3))


def tractogram(*lines: ArrayLike, status: StreamlineStatus = StreamlineStatus.REACHED_TARGET) -> Tractogram:
    return Tractogram([Streamline(np.asarray(points, dtype=np.float64), status) for points in lines], step_size=0.2)
