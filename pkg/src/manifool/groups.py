"""Transformation Lie groups on the normalized image square.

A transform is a 3x3 homogeneous matrix acting on coordinates in [-1, 1]^2
with the origin at the image center (x to the right, y down). Five nested
group kinds are supported, from pure translations up to projective maps.
Each kind carries a generator basis of its Lie algebra. Generators are
rescaled so that a unit coefficient displaces a reference pixel grid by
unit RMS, which makes coefficients, step sizes and geodesic lengths
comparable across generators and group kinds.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NonFiniteError,
    NotInImageError,
    ProjectionResidualError,
    SingularTransformError,
)

_DET_EPS = 1e-12
_IDENTITY = np.eye(3)


class GroupKind(enum.Enum):
    """Supported transformation groups, ordered by inclusion."""

    TRANSLATION = "translation"
    EUCLIDEAN = "euclidean"
    SIMILARITY = "similarity"
    AFFINE = "affine"
    PROJECTIVE = "projective"

    @property
    def dim(self) -> int:
        """Dimension of the group's Lie algebra."""
        return _KIND_DIMS[self]


_KIND_DIMS = {
    GroupKind.TRANSLATION: 2,
    GroupKind.EUCLIDEAN: 3,
    GroupKind.SIMILARITY: 4,
    GroupKind.AFFINE: 6,
    GroupKind.PROJECTIVE: 8,
}

# Raw (unscaled) algebra basis. Kinds share a common prefix: x/y translation,
# rotation, isotropic scale, stretch, shear, then the two projective tilts.
_RAW_GENERATORS = np.array(
    [
        [[0, 0, 1], [0, 0, 0], [0, 0, 0]],  # translate x
        [[0, 0, 0], [0, 0, 1], [0, 0, 0]],  # translate y
        [[0, -1, 0], [1, 0, 0], [0, 0, 0]],  # rotate
        [[1, 0, 0], [0, 1, 0], [0, 0, 0]],  # isotropic scale
        [[1, 0, 0], [0, -1, 0], [0, 0, 0]],  # stretch (x grows, y shrinks)
        [[0, 1, 0], [1, 0, 0], [0, 0, 0]],  # shear
        [[0, 0, 0], [0, 0, 0], [1, 0, 0]],  # tilt x (projective)
        [[0, 0, 0], [0, 0, 0], [0, 1, 0]],  # tilt y (projective)
    ],
    dtype=float,
)


def normalized_axes(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized x and y coordinates of the pixel centers of an (H, W) grid.

    Pixel (i, j) sits at (x[j], y[i]); the grid spans [-1, 1] in both axes.
    """
    if height < 2 or width < 2:
        raise ValueError(f"grid must be at least 2x2, got {height}x{width}")
    return np.linspace(-1.0, 1.0, width), np.linspace(-1.0, 1.0, height)


@dataclass(frozen=True)
class Transform:
    """A 3x3 homogeneous transform of normalized image coordinates.

    Non-projective kinds keep an exact (0, 0, 1) bottom row; projective
    matrices are normalized so the (2, 2) entry is 1.
    """

    matrix: np.ndarray
    kind: GroupKind

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"transform matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteError("transform matrix has non-finite entries")
        if self.kind is GroupKind.PROJECTIVE:
            if abs(m[2, 2]) < _DET_EPS:
                raise SingularTransformError("projective matrix has vanishing (2,2) entry")
            m = m / m[2, 2]
        else:
            if not np.allclose(m[2], (0.0, 0.0, 1.0), atol=1e-9):
                raise ValueError(f"{self.kind.value} transform must have bottom row (0, 0, 1)")
            m[2] = (0.0, 0.0, 1.0)
        if abs(np.linalg.det(m)) < _DET_EPS:
            raise SingularTransformError("transform matrix is numerically singular")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, kind: GroupKind = GroupKind.AFFINE) -> "Transform":
        return cls(np.eye(3), kind)


@dataclass(frozen=True)
class GeneratorSet:
    """Scaled Lie-algebra basis for one group kind.

    ``generators[j]`` is the raw basis matrix and ``scales[j]`` the factor
    normalizing it to unit RMS grid displacement; the effective generator
    seen by the exponential map is ``scales[j] * generators[j]``.
    """

    kind: GroupKind
    generators: np.ndarray  # (d, 3, 3)
    scales: np.ndarray  # (d,)

    def __post_init__(self) -> None:
        gens = np.asarray(self.generators, dtype=float)
        scales = np.asarray(self.scales, dtype=float)
        if gens.shape != (len(scales), 3, 3):
            raise ValueError("generator/scale shapes do not match")
        if np.any(scales <= 0):
            raise ValueError("generator scales must be positive")
        gens.flags.writeable = False
        scales.flags.writeable = False
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "scales", scales)

    @property
    def dim(self) -> int:
        return len(self.scales)

    @property
    def scaled(self) -> np.ndarray:
        """Effective generators, ``scales[j] * generators[j]``, shape (d, 3, 3)."""
        return self.scales[:, None, None] * self.generators


def _rms_displacement(matrix: np.ndarray, points: np.ndarray) -> float:
    """RMS displacement of ``points`` ((N, 2) normalized coords) under ``matrix``."""
    q = np.column_stack([points, np.ones(len(points))]) @ matrix.T
    w = q[:, 2]
    if np.any(np.abs(w) < 1e-9):
        return math.inf
    disp = q[:, :2] / w[:, None] - points
    return float(np.sqrt(np.mean(np.sum(disp * disp, axis=1))))


def _unit_rms_scale(generator: np.ndarray, points: np.ndarray) -> float:
    # The RMS displacement of expm(s * G) grows monotonically from 0 on the
    # bracket searched here, so plain bisection suffices.
    def rms(s: float) -> float:
        return _rms_displacement(_expm(s * generator), points)

    hi = 1.0
    while rms(hi) < 1.0:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("generator normalization failed to bracket unit displacement")
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if rms(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@functools.lru_cache(maxsize=64)
def _build_basis(kind: GroupKind, height: int, width: int) -> GeneratorSet:
    xs, ys = normalized_axes(height, width)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    gens = _RAW_GENERATORS[: kind.dim]
    scales = np.array([_unit_rms_scale(g, points) for g in gens])
    return GeneratorSet(kind, gens.copy(), scales)


def make_basis(kind: GroupKind, grid_shape: tuple[int, int]) -> GeneratorSet:
    """Generator basis for ``kind``, normalized on an (H, W) pixel grid.

    Each generator is rescaled so that ``exp_map`` of a unit coordinate
    vector displaces the grid points by RMS 1.
    """
    height, width = int(grid_shape[0]), int(grid_shape[1])
    return _build_basis(kind, height, width)


def _expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring on a truncated series."""
    norm = float(np.linalg.norm(a))
    squarings = max(0, math.ceil(math.log2(norm / 0.25))) if norm > 0.25 else 0
    b = a / (2.0**squarings)
    x = np.eye(3) + b
    term = b
    for k in range(2, 31):
        term = term @ b / k
        x = x + term
        if np.linalg.norm(term) < 1e-18:
            break
    for _ in range(squarings):
        x = x @ x
    return x


def _sqrtm_db(m: np.ndarray) -> np.ndarray:
    """Principal matrix square root by the Denman-Beavers iteration."""
    y = m.astype(float)
    z = np.eye(3)
    for _ in range(64):
        try:
            yi = np.linalg.inv(y)
            zi = np.linalg.inv(z)
        except np.linalg.LinAlgError as exc:
            raise NotInImageError("singular iterate in the square-root iteration") from exc
        y_new = 0.5 * (y + zi)
        if not np.all(np.isfinite(y_new)) or np.linalg.norm(y_new) > 1e12:
            raise NotInImageError("square-root iteration diverged")
        converged = np.linalg.norm(y_new - y) <= 1e-15 * max(1.0, np.linalg.norm(y))
        y, z = y_new, 0.5 * (z + yi)
        if converged:
            return y
    raise NotInImageError("square-root iteration did not converge")


def exp_map(v: np.ndarray, basis: GeneratorSet) -> Transform:
    """Exponential of the algebra element with coordinates ``v`` on ``basis``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (basis.dim,):
        raise ValueError(f"expected {basis.dim} coordinates, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("algebra vector has non-finite coordinates")
    a = np.tensordot(v * basis.scales, basis.generators, axes=1)
    return Transform(_expm(a), basis.kind)


def log_map(t: Transform, basis: GeneratorSet) -> np.ndarray:
    """Coordinates of ``t`` on ``basis``, inverting :func:`exp_map`.

    Uses inverse scaling-and-squaring: repeated principal square roots until
    the matrix is close to identity, a truncated log series, then projection
    onto the generator span. For the projective kind the overall scale of a
    homogeneous matrix is meaningless, so the identity direction is absorbed
    before projecting.
    """
    m = np.array(t.matrix, dtype=float)
    if abs(np.linalg.det(m)) < _DET_EPS:
        raise NotInImageError("matrix is numerically singular")
    halvings = 0
    while np.linalg.norm(m - _IDENTITY) > 0.5:
        if halvings >= 30:
            raise NotInImageError("square roots did not contract the matrix toward identity")
        m = _sqrtm_db(m)
        halvings += 1
    x = m - _IDENTITY
    log_m = x.copy()
    power = x
    for j in range(2, 61):
        power = power @ x
        log_m = log_m + ((-1.0) ** (j + 1) / j) * power
        if np.linalg.norm(power) / j < 1e-17:
            break
    log_m *= 2.0**halvings

    columns = [g.ravel() for g in basis.scaled]
    if basis.kind is GroupKind.PROJECTIVE:
        columns.append(_IDENTITY.ravel())
    bmat = np.stack(columns, axis=1)
    coef, *_ = np.linalg.lstsq(bmat, log_m.ravel(), rcond=None)
    residual = float(np.linalg.norm(bmat @ coef - log_m.ravel()))
    if residual > 1e-6:
        raise ProjectionResidualError(
            f"matrix log lies outside the generator span (residual {residual:.2e})"
        )
    return coef[: basis.dim]


def _promote(k1: GroupKind, k2: GroupKind) -> GroupKind:
    return k1 if k1.dim >= k2.dim else k2


def compose(t1: Transform, t2: Transform) -> Transform:
    """Transform applying ``t2`` first, then ``t1`` (matrix product t1 @ t2).

    Kinds promote to the larger of the two groups.
    """
    return Transform(t1.matrix @ t2.matrix, _promote(t1.kind, t2.kind))


def invert(t: Transform) -> Transform:
    """Group inverse of ``t``."""
    if abs(np.linalg.det(t.matrix)) < _DET_EPS:
        raise SingularTransformError("cannot invert a numerically singular transform")
    return Transform(np.linalg.inv(t.matrix), t.kind)


def translation_transform(dx: float, dy: float, kind: GroupKind = GroupKind.TRANSLATION) -> Transform:
    """Pure translation by (dx, dy) in normalized coordinates."""
    m = np.eye(3)
    m[0, 2] = dx
    m[1, 2] = dy
    return Transform(m, kind)


def rotation_transform(theta: float, kind: GroupKind = GroupKind.EUCLIDEAN) -> Transform:
    """Rotation by ``theta`` radians about the image center."""
    c, s = math.cos(theta), math.sin(theta)
    return Transform(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), kind)
