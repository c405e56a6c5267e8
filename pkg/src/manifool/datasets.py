"""Labeled image datasets: synthetic shape generation and disk I/O.

The synthetic generator renders anti-aliased parametric shapes (one family
per class) with randomized position, scale and rotation, so class identity
is carried by geometry and geometric augmentation has something to work
with.

Disk layout of a dataset directory::

    root/
      classes.txt    one class name per line
      manifest.csv   header path,label,split,provenance
      train/*.pgm    8-bit binary PGM (or PPM for 3-channel images)
      test/*.pgm
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import read_image, write_csv, write_image

SHAPE_FAMILIES = ("disk", "box", "cross", "triangle", "ring")


@dataclass
class LabeledDataset:
    """Images with integer labels and class names.

    ``provenance`` optionally tags each sample with how it was produced
    (original, random, erasing, manifool, ...).
    """

    images: list[np.ndarray]
    labels: np.ndarray
    class_names: list[str]
    provenance: list[str] | None = None

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels have different lengths")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("labels out of range for class_names")
        if self.provenance is not None and len(self.provenance) != len(self.images):
            raise ValueError("provenance length does not match images")

    def __len__(self) -> int:
        return len(self.images)


def _shape_distance(family: str, x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Signed distance field of one randomly posed shape on the [-1,1] grid.

    Pose ranges are moderate (small jitter, limited rotation) so the task is
    learnable from few samples, while still leaving pose variation for
    geometric augmentation to extend.
    """
    cx, cy = rng.uniform(-0.12, 0.12, size=2)
    theta = rng.uniform(-np.deg2rad(20.0), np.deg2rad(20.0))
    c, s = np.cos(theta), np.sin(theta)
    px = c * (x - cx) + s * (y - cy)
    py = -s * (x - cx) + c * (y - cy)
    if family == "disk":
        r = rng.uniform(0.32, 0.44)
        return np.hypot(px, py) - r
    if family == "box":
        half = rng.uniform(0.28, 0.38)
        return np.maximum(np.abs(px), np.abs(py)) - half
    if family == "cross":
        arm = rng.uniform(0.40, 0.52)
        width = rng.uniform(0.11, 0.15)
        horiz = np.maximum(np.abs(px) - arm, np.abs(py) - width)
        vert = np.maximum(np.abs(px) - width, np.abs(py) - arm)
        return np.minimum(horiz, vert)
    if family == "triangle":
        r = rng.uniform(0.40, 0.52)
        angles = np.deg2rad([90.0, 210.0, 330.0])
        verts = np.stack([r * np.cos(angles), r * np.sin(angles)], axis=1)
        sdf = np.full_like(px, -np.inf)
        for i in range(3):
            a, b = verts[i], verts[(i + 1) % 3]
            edge = b - a
            normal = np.array([edge[1], -edge[0]]) / np.linalg.norm(edge)
            sdf = np.maximum(sdf, normal[0] * (px - a[0]) + normal[1] * (py - a[1]))
        return sdf
    if family == "ring":
        r = rng.uniform(0.34, 0.44)
        width = rng.uniform(0.09, 0.13)
        return np.abs(np.hypot(px, py) - r) - width
    raise ValueError(f"unknown shape family {family!r}")


def generate_synthetic_dataset(
    classes: int = 3,
    samples_per_class: int = 25,
    size: int = 28,
    seed: int = 0,
) -> LabeledDataset:
    """Render a balanced shape-classification dataset, deterministic per seed."""
    if size < 16:
        raise ValueError(f"image size must be at least 16, got {size}")
    if not 2 <= classes <= len(SHAPE_FAMILIES):
        raise ValueError(f"classes must be in [2, {len(SHAPE_FAMILIES)}], got {classes}")
    xs = np.linspace(-1.0, 1.0, size)
    x, y = np.meshgrid(xs, xs)
    aa = 2.0 * (2.0 / (size - 1))  # soft edge about two pixels wide
    images: list[np.ndarray] = []
    labels: list[int] = []
    for ci in range(classes):
        family = SHAPE_FAMILIES[ci]
        for si in range(samples_per_class):
            rng = np.random.default_rng([seed, ci, si])
            sdf = _shape_distance(family, x, y, rng)
            fg = rng.uniform(0.65, 1.0)
            img = fg * np.clip(0.5 - sdf / aa, 0.0, 1.0)
            img = img + rng.normal(0.0, 0.04, size=img.shape)
            images.append(np.clip(img, 0.0, 1.0)[:, :, None])
            labels.append(ci)
    names = list(SHAPE_FAMILIES[:classes])
    return LabeledDataset(images, np.array(labels), names, ["original"] * len(images))


@dataclass
class DatasetManifest:
    """Index of a dataset directory: per-image path, label and split."""

    root: Path
    entries: list[tuple[str, int, str]] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)

    def split_entries(self, split: str) -> list[tuple[str, int, str]]:
        return [e for e in self.entries if e[2] == split]


def save_dataset(root: str | Path, train: LabeledDataset, test: LabeledDataset) -> DatasetManifest:
    """Write train/test splits under ``root`` (PGM/PPM files plus manifest)."""
    root = Path(root)
    if train.class_names != test.class_names:
        raise ValueError("train and test class names differ")
    root.mkdir(parents=True, exist_ok=True)
    (root / "classes.txt").write_text("\n".join(train.class_names) + "\n", encoding="utf-8")
    rows: list[tuple] = []
    for split, ds in (("train", train), ("test", test)):
        (root / split).mkdir(exist_ok=True)
        provenance = ds.provenance or ["original"] * len(ds)
        for i, (img, label) in enumerate(zip(ds.images, ds.labels)):
            ext = "pgm" if np.asarray(img).ndim == 2 or img.shape[2] == 1 else "ppm"
            rel = f"{split}/{i:05d}_c{label}.{ext}"
            write_image(root / rel, img)
            rows.append((rel, int(label), split, provenance[i]))
    write_csv(root / "manifest.csv", ["path", "label", "split", "provenance"], rows)
    return DatasetManifest(root, [(r[0], r[1], r[2]) for r in rows], list(train.class_names))


def load_manifest(root: str | Path) -> DatasetManifest:
    root = Path(root)
    manifest_path = root / "manifest.csv"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no dataset manifest at {manifest_path}")
    class_names = (root / "classes.txt").read_text(encoding="utf-8").split()
    entries: list[tuple[str, int, str]] = []
    seen: set[str] = set()
    lines = manifest_path.read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        if not line:
            continue
        path, label, split = line.split(",")[:3]
        if path in seen:
            raise ValueError(f"duplicate manifest entry {path!r}")
        if not (root / path).is_file():
            raise FileNotFoundError(f"manifest references missing image {path!r}")
        seen.add(path)
        entries.append((path, int(label), split))
    return DatasetManifest(root, entries, class_names)


def load_dataset(root: str | Path, split: str) -> LabeledDataset:
    """Load one split of a dataset directory into memory."""
    manifest = load_manifest(root)
    entries = manifest.split_entries(split)
    images = [read_image(manifest.root / path) for path, _, _ in entries]
    labels = np.array([label for _, label, _ in entries], dtype=int)
    return LabeledDataset(images, labels, manifest.class_names, ["original"] * len(images))
