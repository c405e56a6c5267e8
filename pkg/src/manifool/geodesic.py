"""Geodesic distances of transformations on the image-appearance manifold.

The distance between the identity and a transform is the L2 path length of
the warped image along the one-parameter subgroup through the transform's
log coordinates, discretized into segments. Normalizing by the image norm
makes the measure comparable across images; averaging it over crafted
boundary samples gives a robustness score, and sampling random transforms
at prescribed distances gives a misclassification-rate curve.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import NoSamplesError, UnreachableDistanceError, ZeroImageError
from .groups import GeneratorSet, Transform, _expm, compose, exp_map, invert, log_map
from .io import write_csv
from .warp import as_hwc, warp_image, warp_with_inverse_matrices

if TYPE_CHECKING:  # pragma: no cover
    from .classifiers import Classifier
    from .crafting import ManiFoolResult

DEFAULT_SEGMENTS = 64


@dataclass(frozen=True)
class CurvePoint:
    """One misclassification-curve sample: rate over ``trials`` random draws."""

    distance: float
    rate: float
    trials: int
    skipped: int


@dataclass
class RobustnessReport:
    """Average boundary distance plus the random-transform curve."""

    rho: float | None
    curve: list[CurvePoint]
    r_tau: float | None
    threshold: float = 0.5


def _inverse_path_stack(
    algebra_matrix: np.ndarray, n_segments: int, base_inverse: np.ndarray | None = None
) -> np.ndarray:
    """Inverse matrices of the path points exp(k/N * A) [o base], k = 0..N.

    Built as repeated products of exp(-A/N), which stays exactly affine for
    affine algebra elements (no linear solves involved).
    """
    step = _expm(-algebra_matrix / n_segments)
    mats = np.empty((n_segments + 1, 3, 3))
    mats[0] = np.eye(3)
    for k in range(n_segments):
        mats[k + 1] = mats[k] @ step
    if base_inverse is not None:
        mats = base_inverse @ mats
    return mats


def _segment_length_sum(warped: np.ndarray) -> float:
    diffs = warped[1:] - warped[:-1]
    return float(np.sqrt((diffs * diffs).sum(axis=(1, 2, 3))).sum())


def _algebra_matrix(v: np.ndarray, basis: GeneratorSet) -> np.ndarray:
    return np.tensordot(np.asarray(v, dtype=float) * basis.scales, basis.generators, axes=1)


def path_length(
    img: np.ndarray,
    v: np.ndarray,
    basis: GeneratorSet,
    n_segments: int = DEFAULT_SEGMENTS,
) -> float:
    """Discretized L2 path length of the warp along t -> exp_map(t v), t in [0, 1]."""
    if n_segments < 2:
        raise ValueError(f"need at least 2 segments, got {n_segments}")
    if np.asarray(v).shape != (basis.dim,):
        raise ValueError(f"expected {basis.dim} coordinates")
    stack = _inverse_path_stack(_algebra_matrix(v, basis), n_segments)
    return _segment_length_sum(warp_with_inverse_matrices(img, stack))


def path_length_between(
    img: np.ndarray,
    t1: Transform,
    t2: Transform,
    basis: GeneratorSet,
    n_segments: int = DEFAULT_SEGMENTS,
) -> float:
    """Path length between two transforms, via the relative transform t2 o t1^-1."""
    v = log_map(compose(t2, invert(t1)), basis)
    stack = _inverse_path_stack(_algebra_matrix(v, basis), n_segments, invert(t1).matrix)
    return _segment_length_sum(warp_with_inverse_matrices(img, stack))


def piecewise_path_length(
    img: np.ndarray,
    steps: Sequence[np.ndarray],
    basis: GeneratorSet,
    segments_per_step: int = 8,
) -> float:
    """Diagnostic length along the actual crafting iterates.

    ``steps`` are the per-iteration algebra vectors, each composed on the
    left of the accumulated transform. This alternate measure follows the
    polyline the search actually walked; it is reported separately from the
    subgroup-line distance and never mixed with it.
    """
    total = 0.0
    accumulated = Transform.identity(basis.kind)
    for u in steps:
        stack = _inverse_path_stack(
            _algebra_matrix(u, basis), segments_per_step, invert(accumulated).matrix
        )
        total += _segment_length_sum(warp_with_inverse_matrices(img, stack))
        accumulated = compose(exp_map(u, basis), accumulated)
    return total


def image_norm(img: np.ndarray) -> float:
    """L2 norm over all pixels and channels."""
    return float(np.linalg.norm(as_hwc(img)))


def normalized_distance(
    img: np.ndarray,
    v: np.ndarray,
    basis: GeneratorSet,
    n_segments: int = DEFAULT_SEGMENTS,
) -> float:
    """Path length divided by the image norm; invariant to pixel scaling."""
    norm = image_norm(img)
    if norm < 1e-12:
        raise ZeroImageError("cannot normalize distances on a zero image")
    return path_length(img, v, basis, n_segments) / norm


def robustness_score(samples: Iterable["ManiFoolResult"]) -> float:
    """Mean normalized distance over the successful samples."""
    distances = [s.distance for s in samples if s.success]
    if not distances:
        raise NoSamplesError("no successful samples to average")
    return float(np.mean(distances))


def random_transform_at_distance(
    img: np.ndarray,
    basis: GeneratorSet,
    r: float,
    rng: np.random.Generator,
    tol: float = 0.02,
    s_max: float = 20.0,
    n_segments: int = DEFAULT_SEGMENTS,
) -> Transform:
    """Random transform whose normalized distance from identity is r (within tol).

    Draws a uniform random unit direction in algebra coordinates and bisects
    its magnitude. Raises :class:`UnreachableDistanceError` when magnitudes
    up to ``s_max`` cannot reach ``r``.
    """
    if r <= 0:
        raise ValueError(f"target distance must be positive, got {r}")
    norm = image_norm(img)
    if norm < 1e-12:
        raise ZeroImageError("cannot normalize distances on a zero image")
    direction = rng.normal(size=basis.dim)
    dnorm = np.linalg.norm(direction)
    while dnorm < 1e-12:  # pragma: no cover - essentially impossible
        direction = rng.normal(size=basis.dim)
        dnorm = np.linalg.norm(direction)
    direction /= dnorm
    algebra = _algebra_matrix(direction, basis)

    def distance_at(s: float) -> float:
        return normalized_distance(img, s * direction, basis, n_segments)

    # Propose a magnitude from one cumulative length curve along the
    # direction, then polish with exact evaluations under a bracket guard.
    s_hi = 1.0
    while True:
        segments = n_segments * max(1, round(s_hi))
        warped = warp_with_inverse_matrices(img, _inverse_path_stack(algebra * s_hi, segments))
        diffs = warped[1:] - warped[:-1]
        cumulative = np.cumsum(np.sqrt((diffs * diffs).sum(axis=(1, 2, 3)))) / norm
        if cumulative[-1] >= r or s_hi >= s_max:
            break
        s_hi = min(2.0 * s_hi, s_max)
    if cumulative[-1] >= r:
        j = int(np.searchsorted(cumulative, r))
        c_prev = cumulative[j - 1] if j > 0 else 0.0
        span = cumulative[j] - c_prev
        frac = (r - c_prev) / span if span > 0 else 1.0
        s = s_hi * (j + frac) / segments
    else:
        s = s_hi

    lo, hi = 0.0, None
    for _ in range(30):
        d = distance_at(s)
        if abs(d - r) <= tol * r:
            return exp_map(s * direction, basis)
        if d < r:
            if s >= s_max:
                raise UnreachableDistanceError(
                    f"distance {r} not reachable within magnitude {s_max} along the sampled direction"
                )
            lo = s
        else:
            hi = s
        if hi is None:
            s = min(s * min(max(r / d, 1.1), 4.0) if d > 0 else 2.0 * s, s_max)
        else:
            proposal = s * (r / d) if d > 0 else 0.5 * (lo + hi)
            s = proposal if lo < proposal < hi else 0.5 * (lo + hi)
    raise UnreachableDistanceError(f"failed to land within {tol:.0%} of distance {r}")


def _ordered_map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def misclassification_curve(
    clf: "Classifier",
    images: Sequence[np.ndarray],
    basis: GeneratorSet,
    distances: Sequence[float],
    trials_per_distance: int,
    seed: int,
    threads: int = 1,
) -> list[CurvePoint]:
    """Rate of prediction changes under random transforms at each distance.

    A trial counts as misclassified when the prediction on the warped image
    differs from the prediction on the untransformed image. Trials whose
    target distance is unreachable are skipped and reported in ``skipped``.
    Each (distance, image, trial) draws its own seeded stream, so results
    are independent of ``threads``.
    """
    if trials_per_distance < 1:
        raise ValueError("need at least one trial per distance")
    if list(distances) != sorted(distances):
        raise ValueError("distances must be increasing")
    base_predictions = [clf.predict(img) for img in images]

    def run_trial(job: tuple[int, int, int]) -> bool | None:
        di, img_i, trial = job
        rng = np.random.default_rng([seed, di, img_i, trial])
        try:
            t = random_transform_at_distance(images[img_i], basis, distances[di], rng)
        except UnreachableDistanceError:
            return None
        return clf.predict(warp_image(images[img_i], t)) != base_predictions[img_i]

    curve: list[CurvePoint] = []
    for di, r in enumerate(distances):
        jobs = [(di, i, t) for i in range(len(images)) for t in range(trials_per_distance)]
        outcomes = _ordered_map(run_trial, jobs, threads)
        counted = [o for o in outcomes if o is not None]
        skipped = len(outcomes) - len(counted)
        rate = float(np.mean(counted)) if counted else 0.0
        curve.append(CurvePoint(float(r), rate, len(counted), skipped))
    return curve


def r_tau(curve: Sequence[CurvePoint], threshold: float = 0.5) -> float | None:
    """Smallest distance at which the rate reaches ``threshold``.

    Linear interpolation between adjacent curve points; ``None`` when the
    curve never reaches the threshold.
    """
    if not curve:
        raise ValueError("curve is empty")
    for i, point in enumerate(curve):
        if point.rate >= threshold:
            if i == 0:
                return float(point.distance)
            prev = curve[i - 1]
            span = point.rate - prev.rate
            frac = (threshold - prev.rate) / span
            return float(prev.distance + frac * (point.distance - prev.distance))
    return None


def write_curve_csv(path: str | Path, curve: Sequence[CurvePoint]) -> None:
    rows = [(p.distance, p.rate, p.trials, p.skipped) for p in curve]
    write_csv(path, ["distance", "rate", "trials", "skipped"], rows)
