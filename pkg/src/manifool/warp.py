"""Inverse-mapped bilinear image warping and appearance derivatives.

Images are float arrays shaped (H, W) or (H, W, C) with C in {1, 3} and
values in [0, 1]. Pixel (i, j) sits at normalized coordinates
x = -1 + 2j/(W-1), y = -1 + 2i/(H-1), matching :mod:`manifool.groups`.
Coordinates outside the grid sample a zero (black) extension.
"""

from __future__ import annotations

import functools

import numpy as np

from .groups import GeneratorSet, Transform, invert, normalized_axes

_MIN_JACOBIAN_SIZE = 8


def as_hwc(img: np.ndarray) -> np.ndarray:
    """View ``img`` as (H, W, C) float64, accepting a bare (H, W) array."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W) or (H, W, C in {{1,3}}) image, got {arr.shape}")
    return arr


@functools.lru_cache(maxsize=32)
def _cached_axes(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = normalized_axes(height, width)
    xs.flags.writeable = False
    ys.flags.writeable = False
    return xs, ys


def grid_coords(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Meshed normalized coordinates (X, Y), each shaped (H, W)."""
    xs, ys = _cached_axes(height, width)
    return np.meshgrid(xs, ys)


@functools.lru_cache(maxsize=32)
def _homogeneous_grid(height: int, width: int) -> np.ndarray:
    gx, gy = grid_coords(height, width)
    points = np.stack([gx.ravel(), gy.ravel(), np.ones(height * width)])
    points.flags.writeable = False
    return points  # (3, HW)


def _sample_bilinear(arr: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Bilinear samples of (H, W, C) ``arr`` at fractional pixel positions.

    Positions outside the pixel grid blend into a zero extension.
    """
    h, w, c = arr.shape
    shape = rows.shape
    rows = np.asarray(rows, dtype=float).ravel()
    cols = np.asarray(cols, dtype=float).ravel()
    r0 = np.floor(rows)
    c0 = np.floor(cols)
    fr = rows - r0
    fc = cols - c0
    # Snap sub-epsilon fractions so exact-grid warps (identity, whole-pixel
    # translations) reproduce pixels exactly.
    for frac, low in ((fr, r0), (fc, c0)):
        frac[frac < 1e-9] = 0.0
        high = frac > 1.0 - 1e-9
        low[high] += 1.0
        frac[high] = 0.0
    # A two-pixel zero border plus clipping implements the zero extension
    # without per-corner masks: every out-of-range index lands on a zero,
    # including the lower-right neighbors of clipped positions.
    padded = np.zeros((h + 4, w + 4, c))
    padded[2 : h + 2, 2 : w + 2] = arr
    np.clip(r0, -2.0, float(h), out=r0)
    np.clip(c0, -2.0, float(w), out=c0)
    base = (r0.astype(np.intp) + 2) * (w + 4) + (c0.astype(np.intp) + 2)
    if c == 1:
        flat = padded.ravel()
        t00 = flat.take(base)
        t01 = flat.take(base + 1)
        t10 = flat.take(base + w + 4)
        t11 = flat.take(base + w + 5)
        top = t00 + fc * (t01 - t00)
        bottom = t10 + fc * (t11 - t10)
        return (top + fr * (bottom - top)).reshape(shape + (1,))
    flat = padded.reshape(-1, c)
    fr = fr[:, None]
    fc = fc[:, None]
    top = flat[base]
    top += fc * (flat[base + 1] - top)
    bottom = flat[base + w + 4]
    bottom += fc * (flat[base + w + 5] - bottom)
    top += fr * (bottom - top)
    return top.reshape(shape + (c,))


def warp_with_inverse_matrices(img: np.ndarray, inverse_matrices: np.ndarray) -> np.ndarray:
    """Warp ``img`` by K transforms given their inverse matrices, shape (K, 3, 3).

    Returns a (K, H, W, C) stack. This is the vectorized core used by the
    geodesic path-length computation.
    """
    arr = as_hwc(img)
    h, w, c = arr.shape
    points = _homogeneous_grid(h, w)
    mats = np.asarray(inverse_matrices, dtype=float)
    if mats.ndim == 2:
        mats = mats[None]
    # Fold the normalized-to-pixel map into the matrices so the matmul
    # produces pixel coordinates directly.
    to_pixels = np.array(
        [[(w - 1) / 2.0, 0.0, (w - 1) / 2.0], [0.0, (h - 1) / 2.0, (h - 1) / 2.0], [0.0, 0.0, 1.0]]
    )
    pix = to_pixels @ mats
    if np.all(mats[:, 2, :2] == 0.0) and np.all(mats[:, 2, 2] == 1.0):
        q = pix[:, :2, :] @ points  # affine: denominator is exactly one
        cols, rows = q[:, 0, :], q[:, 1, :]
    else:
        q = pix @ points  # (K, 3, HW)
        denom = q[:, 2, :]
        safe = np.abs(denom) > 1e-9
        denom = np.where(safe, denom, 1.0)
        cols = np.where(safe, q[:, 0, :] / denom, 1e9)  # unsafe points land out of bounds
        rows = np.where(safe, q[:, 1, :] / denom, 1e9)
    return _sample_bilinear(arr, rows, cols).reshape(len(mats), h, w, c)


def warp_image(img: np.ndarray, t: Transform) -> np.ndarray:
    """Warp ``img`` by ``t``: output at coordinate p samples img at t^-1 p.

    Bilinear interpolation with zero padding; output has the shape of the
    input.
    """
    arr = np.asarray(img, dtype=float)
    out = warp_with_inverse_matrices(arr, invert(t).matrix[None])[0]
    return out[:, :, 0] if arr.ndim == 2 else out


def spatial_gradient(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Image derivatives along normalized x and y.

    Central differences in the interior, one-sided at the borders, scaled to
    normalized-coordinate units. Returns (d/dx, d/dy) with the input's shape.
    """
    arr = np.asarray(img, dtype=float)
    h, w = arr.shape[:2]
    if h < 3 or w < 3:
        raise ValueError(f"gradient needs at least a 3x3 image, got {h}x{w}")
    gx = np.gradient(arr, 2.0 / (w - 1), axis=1)
    gy = np.gradient(arr, 2.0 / (h - 1), axis=0)
    return gx, gy


def generator_velocity_field(
    generator: np.ndarray, gx: np.ndarray, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate velocity (vx, vy) of the flow of ``generator`` at grid points.

    For homogeneous coordinates q = (x, y, 1) the velocity of the projected
    point under exp(eps * G) is (a - x c, b - y c) with (a, b, c) = G q.
    """
    a = generator[0, 0] * gx + generator[0, 1] * gy + generator[0, 2]
    b = generator[1, 0] * gx + generator[1, 1] * gy + generator[1, 2]
    c = generator[2, 0] * gx + generator[2, 1] * gy + generator[2, 2]
    return a - gx * c, b - gy * c


def appearance_jacobian(img: np.ndarray, t: Transform, basis: GeneratorSet) -> np.ndarray:
    """Derivative of the warped image with respect to new algebra steps.

    Column j is d/deps of warp(img, exp_map(eps * e_j) o t) at eps = 0,
    computed analytically: the spatial gradient of the already-warped image
    contracted with generator j's velocity field (negated, because warping
    samples through the inverse map). Shape (H*W*C, d).
    """
    arr = as_hwc(img)
    h, w, _ = arr.shape
    if h < _MIN_JACOBIAN_SIZE or w < _MIN_JACOBIAN_SIZE:
        raise ValueError(f"appearance Jacobian needs at least 8x8 images, got {h}x{w}")
    warped = warp_with_inverse_matrices(arr, invert(t).matrix[None])[0]
    dx, dy = spatial_gradient(warped)
    gx, gy = grid_coords(h, w)
    columns = []
    for gen in basis.scaled:
        vx, vy = generator_velocity_field(gen, gx, gy)
        col = -(dx * vx[:, :, None] + dy * vy[:, :, None])
        columns.append(col.ravel())
    return np.stack(columns, axis=1)
