"""
Polynomial vector fields over a canonical monomial basis.

A field of order n is v(p) = A · C_n(q) where q = (p - center) / scale is the point expressed in the
field's normalized frame and C_n lists every monomial x^i y^j z^k with i + j + k <= n.
"""

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from math import comb

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..exceptions.polyfield import InvalidCoefficientsError, InvalidFrameError, InvalidOrderError


MIN_ORDER = 1
MAX_ORDER = 8

Term = tuple[int, int, int]


def _degree_block(degree: int) -> list[Term]:
    # pure powers first, then mixed terms; x before y before z
    terms = [(i, j, degree - i - j) for i in range(degree + 1) for j in range(degree - i + 1)]
    return sorted(terms, key=lambda t: (-max(t), -t[0], -t[1], -t[2]))


@dataclass(frozen=True)
class MonomialBasis:
    order: int
    terms: tuple[Term, ...]

    @property
    def size(self) -> int:
        return len(self.terms)

    @cached_property
    def exponents(self) -> NDArray[np.int64]:
        return np.array(self.terms, dtype=np.int64).reshape(-1, 3)

    @cached_property
    def index(self) -> dict[Term, int]:
        return {term: i for i, term in enumerate(self.terms)}


@lru_cache(maxsize=None)
def _basis(order: int) -> MonomialBasis:
    terms = [term for degree in range(order, -1, -1) for term in _degree_block(degree)]
    return MonomialBasis(order=order, terms=tuple(terms))


def basis_size(order: int) -> int:
    return comb(order + 3, 3)


def build_basis(order: int) -> MonomialBasis:
    """Return the canonical monomial basis C_n, grouped by total degree from n down to 0."""

    if not MIN_ORDER <= order <= MAX_ORDER:
        raise InvalidOrderError(f"order must be between {MIN_ORDER} and {MAX_ORDER}, got {order}")
    return _basis(order)


@dataclass(frozen=True, eq=False)
class CoordFrame:
    center: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    scale: NDArray[np.float64] = field(default_factory=lambda: np.ones(3))

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=np.float64)
        scale = np.asarray(self.scale, dtype=np.float64)
        if center.shape != (3,) or scale.shape != (3,):
            raise InvalidFrameError("center and scale must be 3-vectors")
        if not np.all(np.isfinite(center)) or not np.all(np.isfinite(scale)) or np.any(scale <= 0):
            raise InvalidFrameError(f"invalid frame center={center.tolist()} scale={scale.tolist()}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)

    @classmethod
    def identity(cls) -> "CoordFrame":
        return cls(np.zeros(3), np.ones(3))

    @classmethod
    def bounding(cls, points: ArrayLike, floor: float = 1.0) -> "CoordFrame":
        """Map the bounding box of `points` to [-1, 1]^3, never scaling an axis below `floor` mm."""

        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return cls((lo + hi) / 2, np.maximum((hi - lo) / 2, floor))

    def normalize(self, points: ArrayLike) -> NDArray[np.float64]:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale


@dataclass(frozen=True, eq=False)
class PolyField:
    order: int
    coeffs: NDArray[np.float64]
    frame: CoordFrame = field(default_factory=CoordFrame.identity)

    def __post_init__(self) -> None:
        basis = build_basis(self.order)
        coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if coeffs.shape != (3, basis.size):
            raise InvalidCoefficientsError(f"expected shape (3, {basis.size}), got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise InvalidCoefficientsError("coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def basis(self) -> MonomialBasis:
        return build_basis(self.order)

    @classmethod
    def zeros(cls, order: int, frame: CoordFrame | None = None) -> "PolyField":
        return cls(order, np.zeros((3, basis_size(order))), frame or CoordFrame.identity())


def _monomials(exponents: NDArray[np.int64], q: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.prod(q[..., None, :] ** exponents, axis=-1)


def eval_basis(basis: MonomialBasis, p: ArrayLike, frame: CoordFrame) -> NDArray[np.float64]:
    """
    Evaluate the basis at p (shape (3,) or (N, 3)) after normalizing through `frame`.

    Returns shape (size,) or (N, size) in basis order.
    """

    return _monomials(basis.exponents, frame.normalize(p))


def basis_gradient(basis: MonomialBasis, p: ArrayLike, frame: CoordFrame) -> NDArray[np.float64]:
    """Partial derivatives of every monomial w.r.t. the physical coordinates, shape (..., size, 3)."""

    q = frame.normalize(p)
    exps = basis.exponents
    out = []
    for axis in range(3):
        lowered = exps.copy()
        lowered[:, axis] = np.maximum(lowered[:, axis] - 1, 0)
        out.append(exps[:, axis] * _monomials(lowered, q) / frame.scale[axis])
    return np.stack(out, axis=-1)


def eval_field(field: PolyField, p: ArrayLike) -> NDArray[np.float64]:
    """v(p) = A · C_n(q); accepts a single point or an (N, 3) array."""

    return eval_basis(field.basis, p, field.frame) @ field.coeffs.T


@dataclass(frozen=True, eq=False)
class DivergenceMap:
    order: int
    matrix: NDArray[np.float64]
    basis: MonomialBasis  # C_{n-1}, the basis H is expressed in

    def apply(self, coeffs: NDArray[np.float64]) -> NDArray[np.float64]:
        """Return H_{n-1} for a coefficient matrix A."""

        return self.matrix @ np.asarray(coeffs, dtype=np.float64).ravel()


def divergence_map(order: int, scale: ArrayLike = (1.0, 1.0, 1.0)) -> DivergenceMap:
    """
    Linear map from flattened A (rows x, y, z) to the coefficients H_{n-1} of div v over C_{n-1}.

    Row for x^i y^j z^k picks (i+1) a^x_{(i+1)jk} + (j+1) a^y_{i(j+1)k} + (k+1) a^z_{ij(k+1)}, each
    divided by the frame scale of its axis so the map yields the divergence in physical units.
    """

    full = build_basis(order)
    lower = _basis(order - 1)
    scale_ = np.asarray(scale, dtype=np.float64)
    matrix = np.zeros((lower.size, 3 * full.size))
    for row, (i, j, k) in enumerate(lower.terms):
        for axis, raised in enumerate([(i + 1, j, k), (i, j + 1, k), (i, j, k + 1)]):
            matrix[row, axis * full.size + full.index[raised]] = raised[axis] / scale_[axis]
    return DivergenceMap(order=order, matrix=matrix, basis=lower)


def divergence_at(field: PolyField, p: ArrayLike) -> NDArray[np.float64] | float:
    """Analytic divergence of the field at p, in physical units."""

    grad = basis_gradient(field.basis, p, field.frame)
    div = sum(grad[..., axis] @ field.coeffs[axis] for axis in range(3))
    return float(div) if np.ndim(div) == 0 else np.asarray(div)
