"""Training-set augmentation: random transforms, random erasing, and
boundary-crafted samples mixed with the originals in an exact 1:1 ratio.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .classifiers import Classifier
from .crafting import CraftConfig, ManiFoolResult, craft_multiclass
from .datasets import LabeledDataset
from .groups import make_basis, rotation_transform
from .warp import as_hwc, warp_image

log = logging.getLogger(__name__)

_MAX_ROTATION = np.deg2rad(30.0)


def _random_copy(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One randomly rotated (+/-30 degrees), coin-flipped copy of ``img``."""
    angle = rng.uniform(-_MAX_ROTATION, _MAX_ROTATION)
    out = warp_image(as_hwc(img), rotation_transform(angle))
    if rng.random() < 0.5:
        out = np.flip(out, axis=1).copy()
    return out


def _doubled(dataset: LabeledDataset, copies: list[np.ndarray], tags: list[str]) -> LabeledDataset:
    provenance = ["original"] * len(dataset) + tags
    return LabeledDataset(
        list(dataset.images) + copies,
        np.concatenate([dataset.labels, dataset.labels]),
        list(dataset.class_names),
        provenance,
    )


def augment_random(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Add one rotated/flipped copy per image (labels preserved, 2n total)."""
    copies = [
        _random_copy(img, np.random.default_rng([seed, i]))
        for i, img in enumerate(dataset.images)
    ]
    return _doubled(dataset, copies, ["random"] * len(dataset))


def augment_erasing(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Add one copy per image with a random rectangle replaced by noise.

    The rectangle covers a uniform [0.02, 0.2] area fraction at a uniform
    [0.3, 3.3] aspect ratio and is filled with standard Gaussian noise
    clipped to [0, 1].
    """
    copies = []
    for i, img in enumerate(dataset.images):
        arr = as_hwc(img).copy()
        h, w, c = arr.shape
        rng = np.random.default_rng([seed, i])
        area = rng.uniform(0.02, 0.2) * h * w
        aspect = rng.uniform(0.3, 3.3)
        rect_h = max(1, min(h, round(np.sqrt(area / aspect))))
        rect_w = max(1, min(w, round(np.sqrt(area * aspect))))
        top = rng.integers(0, h - rect_h + 1)
        left = rng.integers(0, w - rect_w + 1)
        noise = rng.normal(0.0, 1.0, size=(rect_h, rect_w, c))
        arr[top : top + rect_h, left : left + rect_w] = np.clip(noise, 0.0, 1.0)
        copies.append(arr)
    return _doubled(dataset, copies, ["erasing"] * len(dataset))


def augment_manifool(
    dataset: LabeledDataset,
    crafter: Classifier,
    cfg: CraftConfig | None = None,
    seed: int = 0,
    threads: int = 1,
) -> tuple[LabeledDataset, list[ManiFoolResult | None]]:
    """Add one boundary-crafted copy per image (2n total, exact 1:1 ratio).

    Images the crafter misclassifies, and images whose search fails, fall
    back to a random-augmented copy so the ratio is preserved. Returns the
    augmented dataset and the per-image crafting results (None where the
    crafter already misclassified the original).
    """
    cfg = cfg or CraftConfig()
    basis = make_basis(cfg.kind, as_hwc(dataset.images[0]).shape[:2])

    def craft_one(i: int) -> ManiFoolResult | None:
        img = dataset.images[i]
        label = int(dataset.labels[i])
        if crafter.predict(img) != label:
            return None
        return craft_multiclass(crafter, img, label, cfg, basis)

    indices = range(len(dataset))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(craft_one, indices))
    else:
        results = [craft_one(i) for i in indices]

    copies: list[np.ndarray] = []
    tags: list[str] = []
    for i, result in enumerate(results):
        if result is not None and result.success:
            copies.append(result.warped)
            tags.append("manifool")
        else:
            copies.append(_random_copy(dataset.images[i], np.random.default_rng([seed, i])))
            tags.append("random-fallback")
    n_crafted = tags.count("manifool")
    log.info("manifool augmentation: %d crafted, %d fallbacks", n_crafted, len(tags) - n_crafted)
    return _doubled(dataset, copies, tags), results
