"""Iterative search for the transformation that carries an image to a
classifier's decision boundary.

Each iteration projects the classifier's pixel gradient onto the tangent
space of the transformation group through the appearance Jacobian, takes a
momentum step with a shrinking line search, and retracts via the
exponential map, composing the new step on the left of the accumulated
transform. After the prediction flips, a bisection backtracks along the
final step to the last point still classified as the source class, so the
crafted sample stays on the ground-truth side of the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import Classifier
from .errors import DegenerateJacobianError
from .geodesic import DEFAULT_SEGMENTS, normalized_distance
from .groups import GeneratorSet, GroupKind, Transform, compose, exp_map, log_map, make_basis
from .warp import appearance_jacobian, as_hwc, warp_image

TARGETS_ALL = "all"


@dataclass
class CraftConfig:
    """Knobs of the boundary search.

    ``targets`` is either ``"all"`` (try every other class) or a positive
    integer k (try only the k highest-scoring other classes).
    """

    i_max: int = 50
    gamma: float = 0.5
    lambda_init: float = 0.05
    beta: float = 0.5
    k_max: int = 8
    backtrack_bisections: int = 12
    kind: GroupKind = GroupKind.AFFINE
    targets: str | int = TARGETS_ALL
    n_segments: int = DEFAULT_SEGMENTS

    def __post_init__(self) -> None:
        if self.i_max < 0:
            raise ValueError("i_max must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("momentum gamma must be in [0, 1)")
        if self.lambda_init <= 0.0:
            raise ValueError("lambda_init must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("line-search shrink beta must be in (0, 1)")
        if self.k_max < 0 or self.backtrack_bisections < 1:
            raise ValueError("k_max must be >= 0 and backtrack_bisections >= 1")
        if self.targets != TARGETS_ALL and (not isinstance(self.targets, int) or self.targets < 1):
            raise ValueError(f"targets must be 'all' or a positive integer, got {self.targets!r}")


@dataclass
class ManiFoolResult:
    """Outcome of crafting one image toward one (or the best) target class.

    On success ``boundary_transform`` is the first accumulated transform
    whose warp the classifier misclassifies and ``transform`` the
    backtracked one, still classified as the ground truth. ``distance`` is
    the normalized geodesic distance of ``transform`` from identity.
    """

    success: bool
    transform: Transform
    boundary_transform: Transform | None
    iterations: int
    target_class: int
    distance: float
    warped: np.ndarray
    step_history: list[np.ndarray] = field(default_factory=list)


@dataclass(frozen=True)
class StepResult:
    transform: Transform
    momentum: np.ndarray
    step_size: float
    stuck: bool


def movement_direction(jacobian: np.ndarray, pixel_gradient: np.ndarray) -> np.ndarray:
    """Tangent-space direction -(J^T J + eps I)^-1 J^T g toward the boundary.

    ``eps`` is a tiny Tikhonov term tied to trace(J^T J), keeping the solve
    defined when bilinear warps make the Jacobian rank-deficient.
    """
    jtj = jacobian.T @ jacobian
    trace = float(np.trace(jtj))
    if trace < 1e-20:
        raise DegenerateJacobianError("appearance Jacobian is numerically zero")
    d = jtj.shape[0]
    eps = 1e-8 * trace / d
    rhs = jacobian.T @ np.asarray(pixel_gradient, dtype=float).ravel()
    return -np.linalg.solve(jtj + eps * np.eye(d), rhs)


def _margin(clf: Classifier, img: np.ndarray, l: int, k: int) -> float:
    scores = clf.scores(img)
    return float(scores[l] - scores[k])


def step(
    clf: Classifier,
    x0: np.ndarray,
    tau_acc: Transform,
    u_prev: np.ndarray,
    l: int,
    k: int,
    cfg: CraftConfig,
    basis: GeneratorSet,
) -> StepResult:
    """One momentum line-search step against the (l, k) pairwise margin.

    The step size is the largest lambda_init * beta^j (j = 0..k_max) that
    strictly decreases the margin; if none does, the smallest candidate is
    accepted anyway and flagged ``stuck`` so the search cannot stall.
    """
    current = warp_image(x0, tau_acc)
    f_current = _margin(clf, current, l, k)
    if f_current <= 0.0:
        raise ValueError("step requires a positive (l, k) margin at the current transform")
    jac = appearance_jacobian(x0, tau_acc, basis)
    grad = clf.input_gradient(current, l, k)
    direction = movement_direction(jac, grad)
    norm = float(np.linalg.norm(direction))
    unit = direction / norm if norm > 0.0 else np.zeros_like(direction)

    lam = cfg.lambda_init
    candidate = None
    for _ in range(cfg.k_max + 1):
        u_new = lam * unit + cfg.gamma * np.asarray(u_prev, dtype=float)
        candidate = StepResult(compose(exp_map(u_new, basis), tau_acc), u_new, lam, False)
        if _margin(clf, warp_image(x0, candidate.transform), l, k) < f_current:
            return candidate
        lam *= cfg.beta
    assert candidate is not None
    return StepResult(candidate.transform, candidate.momentum, candidate.step_size, True)


def backtrack(
    clf: Classifier,
    x0: np.ndarray,
    tau_before_last: Transform,
    last_step: np.ndarray,
    l: int,
    cfg: CraftConfig,
    basis: GeneratorSet,
) -> Transform:
    """Shrink the final step back onto the source class.

    Bisects s in [0, 1] over exp_map(s * last_step) o tau_before_last and
    returns the largest tested s whose warp is still classified as ``l``.
    """
    last_step = np.asarray(last_step, dtype=float)

    def at(s: float) -> Transform:
        return compose(exp_map(s * last_step, basis), tau_before_last)

    if clf.predict(warp_image(x0, tau_before_last)) != l:
        raise ValueError("backtrack requires the pre-step transform to be classified as l")
    if clf.predict(warp_image(x0, at(1.0))) == l:
        raise ValueError("backtrack requires the full step to be misclassified")
    lo, hi = 0.0, 1.0
    for _ in range(cfg.backtrack_bisections):
        mid = 0.5 * (lo + hi)
        if clf.predict(warp_image(x0, at(mid))) == l:
            lo = mid
        else:
            hi = mid
    return at(lo)


def craft_pair(
    clf: Classifier,
    x0: np.ndarray,
    l: int,
    k: int,
    cfg: CraftConfig | None = None,
    basis: GeneratorSet | None = None,
) -> ManiFoolResult:
    """Drive ``x0`` toward the boundary between its class ``l`` and class ``k``.

    Iterates until the full argmax prediction leaves ``l`` or ``i_max`` is
    reached. On a crossing, backtracks onto the source class; the result
    then satisfies: boundary transform misclassified, final transform
    classified as ``l``.
    """
    cfg = cfg or CraftConfig()
    arr = as_hwc(x0)
    if basis is None:
        basis = make_basis(cfg.kind, arr.shape[:2])
    if clf.predict(arr) != l:
        raise ValueError("craft_pair requires the classifier to predict the ground-truth class")

    tau = Transform.identity(basis.kind)
    u_prev = np.zeros(basis.dim)
    history: list[np.ndarray] = []
    for iteration in range(1, cfg.i_max + 1):
        result = step(clf, arr, tau, u_prev, l, k, cfg, basis)
        history.append(result.momentum)
        if clf.predict(warp_image(arr, result.transform)) != l:
            final = backtrack(clf, arr, tau, result.momentum, l, cfg, basis)
            return ManiFoolResult(
                success=True,
                transform=final,
                boundary_transform=result.transform,
                iterations=iteration,
                target_class=k,
                distance=normalized_distance(arr, log_map(final, basis), basis, cfg.n_segments),
                warped=warp_image(arr, final),
                step_history=history,
            )
        tau, u_prev = result.transform, result.momentum
    return ManiFoolResult(
        success=False,
        transform=tau,
        boundary_transform=None,
        iterations=cfg.i_max,
        target_class=k,
        distance=normalized_distance(arr, log_map(tau, basis), basis, cfg.n_segments),
        warped=warp_image(arr, tau),
        step_history=history,
    )


def craft_multiclass(
    clf: Classifier,
    x0: np.ndarray,
    l: int,
    cfg: CraftConfig | None = None,
    basis: GeneratorSet | None = None,
) -> ManiFoolResult:
    """Craft against every candidate class and keep the closest boundary.

    Among successful targets, returns the one with the smallest normalized
    geodesic distance; if every target fails, returns the attempt that got
    furthest (most iterations).
    """
    cfg = cfg or CraftConfig()
    arr = as_hwc(x0)
    if basis is None:
        basis = make_basis(cfg.kind, arr.shape[:2])
    scores = clf.scores(arr)
    others = [k for k in range(clf.n_classes) if k != l]
    if cfg.targets != TARGETS_ALL:
        others.sort(key=lambda k: -scores[k])
        others = others[: int(cfg.targets)]
    if not others:
        raise ValueError("no candidate target classes")
    results = [craft_pair(clf, arr, l, k, cfg, basis) for k in others]
    successes = [r for r in results if r.success]
    if successes:
        return min(successes, key=lambda r: r.distance)
    return max(results, key=lambda r: r.iterations)
