"""Experiment driver: dataset setup, augmentation, training, evaluation.

A run trains an evaluated model on a training set built per the chosen
augmentation mode, then reports clean test accuracy, accuracy under random
affine and projective transforms at configured geodesic distances, the
misclassification-rate curve with its threshold distance, and the average
boundary distance obtained by crafting against the evaluated model.

All randomness flows from one seed through a documented counter scheme
(``numpy`` seed sequences keyed by stage and trial indices), so results are
byte-identical across runs and independent of the thread count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import augment_erasing, augment_manifool, augment_random
from .classifiers import Classifier, TrainConfig, train
from .crafting import CraftConfig, craft_multiclass
from .datasets import LabeledDataset, generate_synthetic_dataset, load_dataset
from .errors import ConfigError, NoSamplesError, UnreachableDistanceError
from .geodesic import (
    CurvePoint,
    RobustnessReport,
    r_tau,
    random_transform_at_distance,
    robustness_score,
    write_curve_csv,
)
from .groups import GroupKind, make_basis
from .io import write_config, write_csv
from .warp import as_hwc, warp_image

log = logging.getLogger(__name__)

MODES = ("none", "random", "erasing", "manifool")

# Seed-derivation tags; each stage draws from default_rng([seed, tag, ...]).
SEED_TRAIN_SPLIT = 1
SEED_TEST_SPLIT = 2
SEED_CRAFTER = 3
SEED_EVALUATED = 4
SEED_AUGMENT = 5
SEED_MONTE_CARLO = 6


def derived_seed(seed: int, tag: int) -> int:
    """Stable 32-bit stage seed derived from the run seed and a stage tag."""
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


@dataclass
class DatasetSpec:
    path: str | None = None
    classes: int = 3
    train_per_class: int = 40
    test_per_class: int = 40
    size: int = 28


def _default_train(epochs: int) -> TrainConfig:
    return TrainConfig(epochs=epochs, learning_rate=0.02, weight_decay=1e-4)


@dataclass
class ModelSpec:
    arch: str = "mlp"
    hidden_units: int = 32
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/experiment"
    threads: int = 1
    mode: str = "none"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    crafter: ModelSpec = field(default_factory=lambda: ModelSpec(train=_default_train(30)))
    evaluated: ModelSpec = field(default_factory=lambda: ModelSpec(train=_default_train(60)))
    craft: CraftConfig = field(default_factory=CraftConfig)
    eval_distances: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0, 3.0])
    trials: int = 5

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if list(self.eval_distances) != sorted(self.eval_distances) or any(
            r <= 0 for r in self.eval_distances
        ):
            raise ConfigError("eval_distances must be increasing and positive")

    @classmethod
    def from_items(cls, items: dict[str, str]) -> "ExperimentConfig":
        """Build from flat ``key = value`` pairs; unknown keys are errors."""
        cfg = cls()
        for key, value in items.items():
            setter = _CONFIG_KEYS.get(key)
            if setter is None:
                raise ConfigError(f"unknown configuration key {key!r}")
            try:
                setter(cfg, value)
            except (ValueError, KeyError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
        return cls.from_items_validate(cfg)

    @staticmethod
    def from_items_validate(cfg: "ExperimentConfig") -> "ExperimentConfig":
        cfg.__post_init__()
        cfg.craft.__post_init__()
        for spec in (cfg.crafter, cfg.evaluated):
            spec.train.__post_init__()
        return cfg

    def to_items(self) -> dict[str, object]:
        """Fully resolved flat key/value view (the run manifest content)."""
        items: dict[str, object] = {
            "seed": self.seed,
            "out": self.out,
            "threads": self.threads,
            "mode": self.mode,
            "eval_distances": ",".join(repr(float(r)) for r in self.eval_distances),
            "trials": self.trials,
            "dataset.path": self.dataset.path or "",
            "dataset.classes": self.dataset.classes,
            "dataset.train_per_class": self.dataset.train_per_class,
            "dataset.test_per_class": self.dataset.test_per_class,
            "dataset.size": self.dataset.size,
        }
        for name, spec in (("crafter", self.crafter), ("eval", self.evaluated)):
            items[f"{name}.arch"] = spec.arch
            items[f"{name}.hidden_units"] = spec.hidden_units
            items[f"{name}.epochs"] = spec.train.epochs
            items[f"{name}.batch_size"] = spec.train.batch_size
            items[f"{name}.learning_rate"] = spec.train.learning_rate
            items[f"{name}.weight_decay"] = spec.train.weight_decay
            items[f"{name}.weighting"] = spec.train.weighting
        items.update(
            {
                "craft.i_max": self.craft.i_max,
                "craft.gamma": self.craft.gamma,
                "craft.lambda_init": self.craft.lambda_init,
                "craft.beta": self.craft.beta,
                "craft.k_max": self.craft.k_max,
                "craft.backtrack_bisections": self.craft.backtrack_bisections,
                "craft.kind": self.craft.kind.value,
                "craft.targets": self.craft.targets,
                "craft.segments": self.craft.n_segments,
            }
        )
        return items


def _set(path: str, convert):
    def setter(cfg: ExperimentConfig, value: str) -> None:
        obj = cfg
        *parents, attr = path.split(".")
        for parent in parents:
            obj = getattr(obj, parent)
        setattr(obj, attr, convert(value))

    return setter


def _floats(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _targets(value: str):
    return value if value == "all" else int(value)


_CONFIG_KEYS = {
    "seed": _set("seed", int),
    "out": _set("out", str),
    "threads": _set("threads", int),
    "mode": _set("mode", str),
    "eval_distances": _set("eval_distances", _floats),
    "trials": _set("trials", int),
    "dataset.path": _set("dataset.path", lambda v: v or None),
    "dataset.classes": _set("dataset.classes", int),
    "dataset.train_per_class": _set("dataset.train_per_class", int),
    "dataset.test_per_class": _set("dataset.test_per_class", int),
    "dataset.size": _set("dataset.size", int),
    "craft.i_max": _set("craft.i_max", int),
    "craft.gamma": _set("craft.gamma", float),
    "craft.lambda_init": _set("craft.lambda_init", float),
    "craft.beta": _set("craft.beta", float),
    "craft.k_max": _set("craft.k_max", int),
    "craft.backtrack_bisections": _set("craft.backtrack_bisections", int),
    "craft.kind": _set("craft.kind", GroupKind),
    "craft.targets": _set("craft.targets", _targets),
    "craft.segments": _set("craft.n_segments", int),
}
for _name, _attr in (("crafter", "crafter"), ("eval", "evaluated")):
    _CONFIG_KEYS[f"{_name}.arch"] = _set(f"{_attr}.arch", str)
    _CONFIG_KEYS[f"{_name}.hidden_units"] = _set(f"{_attr}.hidden_units", int)
    _CONFIG_KEYS[f"{_name}.epochs"] = _set(f"{_attr}.train.epochs", int)
    _CONFIG_KEYS[f"{_name}.batch_size"] = _set(f"{_attr}.train.batch_size", int)
    _CONFIG_KEYS[f"{_name}.learning_rate"] = _set(f"{_attr}.train.learning_rate", float)
    _CONFIG_KEYS[f"{_name}.weight_decay"] = _set(f"{_attr}.train.weight_decay", float)
    _CONFIG_KEYS[f"{_name}.weighting"] = _set(f"{_attr}.train.weighting", str)


def load_splits(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Train/test splits, generated synthetically or loaded from disk."""
    if cfg.dataset.path is not None:
        return load_dataset(cfg.dataset.path, "train"), load_dataset(cfg.dataset.path, "test")
    ds = cfg.dataset
    train_split = generate_synthetic_dataset(
        ds.classes, ds.train_per_class, ds.size, derived_seed(cfg.seed, SEED_TRAIN_SPLIT)
    )
    test_split = generate_synthetic_dataset(
        ds.classes, ds.test_per_class, ds.size, derived_seed(cfg.seed, SEED_TEST_SPLIT)
    )
    return train_split, test_split


def _train_model(spec: ModelSpec, dataset: LabeledDataset, seed: int) -> Classifier:
    cfg = TrainConfig(
        epochs=spec.train.epochs,
        batch_size=spec.train.batch_size,
        learning_rate=spec.train.learning_rate,
        seed=seed,
        weight_decay=spec.train.weight_decay,
        weighting=spec.train.weighting,
    )
    return train(dataset, spec.arch, cfg, spec.hidden_units)


def _duplicate(dataset: LabeledDataset) -> LabeledDataset:
    # The no-augmentation mode still doubles the training set (with exact
    # copies) so every mode trains on the same number of samples per epoch.
    provenance = ["original"] * len(dataset) + ["duplicate"] * len(dataset)
    return LabeledDataset(
        list(dataset.images) + [img.copy() for img in dataset.images],
        np.concatenate([dataset.labels, dataset.labels]),
        list(dataset.class_names),
        provenance,
    )


def build_training_set(
    cfg: ExperimentConfig, train_split: LabeledDataset
) -> tuple[LabeledDataset, Classifier | None, list]:
    """Apply the configured augmentation mode; 2x the originals in every mode."""
    aug_seed = derived_seed(cfg.seed, SEED_AUGMENT)
    if cfg.mode == "none":
        return _duplicate(train_split), None, []
    if cfg.mode == "random":
        return augment_random(train_split, aug_seed), None, []
    if cfg.mode == "erasing":
        return augment_erasing(train_split, aug_seed), None, []
    crafter = _train_model(cfg.crafter, train_split, derived_seed(cfg.seed, SEED_CRAFTER))
    augmented, results = augment_manifool(train_split, crafter, cfg.craft, aug_seed, cfg.threads)
    return augmented, crafter, results


def _map_ordered(fn, items, threads: int) -> list:
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def evaluate_under_transforms(
    clf: Classifier,
    dataset: LabeledDataset,
    distances: list[float],
    trials: int,
    seed: int,
    threads: int = 1,
    n_segments: int = 64,
) -> tuple[list[tuple], list[CurvePoint]]:
    """Accuracy rows under random affine/projective warps, plus the affine
    misclassification curve (prediction changes versus the clean image).

    One transform is sampled per (kind, distance, image, trial) and reused
    for both metrics. Rows are (transform_kind, distance, accuracy, n).
    """
    shape = as_hwc(dataset.images[0]).shape[:2]
    base_predictions = [clf.predict(img) for img in dataset.images]
    accuracy_rows: list[tuple] = []
    curve: list[CurvePoint] = []
    for kind_id, kind in enumerate((GroupKind.AFFINE, GroupKind.PROJECTIVE)):
        basis = make_basis(kind, shape)
        for di, r in enumerate(distances):
            jobs = [(i, t) for i in range(len(dataset)) for t in range(trials)]

            def run(job: tuple[int, int]):
                img_i, trial = job
                rng = np.random.default_rng([seed, kind_id, di, img_i, trial])
                img = dataset.images[img_i]
                try:
                    transform = random_transform_at_distance(
                        img, basis, r, rng, n_segments=n_segments
                    )
                except UnreachableDistanceError:
                    return None
                prediction = clf.predict(warp_image(as_hwc(img), transform))
                return (
                    prediction == dataset.labels[img_i],
                    prediction != base_predictions[img_i],
                )

            outcomes = _map_ordered(run, jobs, threads)
            counted = [o for o in outcomes if o is not None]
            skipped = len(outcomes) - len(counted)
            n = len(counted)
            accuracy = float(np.mean([c[0] for c in counted])) if counted else 0.0
            accuracy_rows.append((kind.value, float(r), accuracy, n))
            if kind is GroupKind.AFFINE:
                rate = float(np.mean([c[1] for c in counted])) if counted else 0.0
                curve.append(CurvePoint(float(r), rate, n, skipped))
    return accuracy_rows, curve


def crafted_robustness(
    clf: Classifier,
    dataset: LabeledDataset,
    craft_cfg: CraftConfig,
    threads: int = 1,
) -> tuple[float | None, int, list]:
    """Average boundary distance obtained by crafting against ``clf``.

    Only images the classifier predicts correctly are crafted. Returns
    (mean normalized distance over successes, number of successes, results).
    """
    shape = as_hwc(dataset.images[0]).shape[:2]
    basis = make_basis(craft_cfg.kind, shape)
    eligible = [i for i in range(len(dataset)) if clf.predict(dataset.images[i]) == dataset.labels[i]]

    def craft_one(i: int):
        return craft_multiclass(clf, dataset.images[i], int(dataset.labels[i]), craft_cfg, basis)

    results = _map_ordered(craft_one, eligible, threads)
    try:
        rho = robustness_score(results)
    except NoSamplesError:
        rho = None
    return rho, sum(1 for r in results if r.success), results


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Execute one full run and write its report files under ``cfg.out``.

    Files: accuracy.csv, curve.csv, summary.csv, run_manifest.txt. Any
    failure writes a machine-readable error.txt (stage, type, message)
    before propagating.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = "setup"
    try:
        stage = "data"
        train_split, test_split = load_splits(cfg)
        stage = "augment"
        train_set, crafter, craft_results = build_training_set(cfg, train_split)
        stage = "train"
        model = _train_model(cfg.evaluated, train_set, derived_seed(cfg.seed, SEED_EVALUATED))
        stage = "evaluate"
        clean_accuracy = model.accuracy(test_split)
        accuracy_rows, curve = evaluate_under_transforms(
            model,
            test_split,
            cfg.eval_distances,
            cfg.trials,
            derived_seed(cfg.seed, SEED_MONTE_CARLO),
            cfg.threads,
            cfg.craft.n_segments,
        )
        threshold_distance = r_tau(curve) if curve else None
        stage = "robustness"
        rho, rho_samples, _ = crafted_robustness(model, test_split, cfg.craft, cfg.threads)
        stage = "report"
        report = RobustnessReport(rho, curve, threshold_distance)
        _write_reports(cfg, out, clean_accuracy, accuracy_rows, report, model, crafter, craft_results, rho_samples)
    except Exception as exc:
        write_config(
            out / "error.txt",
            {"stage": stage, "error_type": type(exc).__name__, "message": str(exc)},
        )
        raise
    summary = {
        "mode": cfg.mode,
        "clean_accuracy": clean_accuracy,
        "rho": rho,
        "rho_samples": rho_samples,
        "r_tau": threshold_distance,
        "accuracy_rows": accuracy_rows,
        "curve": curve,
        "out": out,
    }
    log.info(
        "run complete: mode=%s clean=%.4f rho=%s r_tau=%s",
        cfg.mode,
        clean_accuracy,
        rho,
        threshold_distance,
    )
    return summary


def _write_reports(
    cfg: ExperimentConfig,
    out: Path,
    clean_accuracy: float,
    accuracy_rows: list[tuple],
    report: RobustnessReport,
    model: Classifier,
    crafter: Classifier | None,
    craft_results: list,
    rho_samples: int,
) -> None:
    n_test_rows = next((n for _, _, _, n in accuracy_rows), 0)
    acc_csv = [(cfg.mode, "test", "none", 0.0, clean_accuracy, n_test_rows)]
    acc_csv += [(cfg.mode, "test", kind, r, acc, n) for kind, r, acc, n in accuracy_rows]
    write_csv(out / "accuracy.csv", ["mode", "split", "transform_kind", "distance", "accuracy", "n"], acc_csv)
    write_curve_csv(out / "curve.csv", report.curve)

    summary_rows: list[tuple] = [
        ("clean_accuracy", clean_accuracy),
        ("rho", report.rho if report.rho is not None else "not_computed"),
        ("rho_samples", rho_samples),
        ("r_tau", report.r_tau if report.r_tau is not None else "not_reached"),
        ("r_tau_threshold", report.threshold),
        ("eval_train_accuracy", model.train_accuracy),
    ]
    if crafter is not None:
        attempted = sum(1 for r in craft_results if r is not None)
        successes = sum(1 for r in craft_results if r is not None and r.success)
        summary_rows += [
            ("crafter_train_accuracy", crafter.train_accuracy),
            ("augment_attempted", attempted),
            ("augment_successes", successes),
            ("augment_fallbacks", len(craft_results) - successes),
        ]
    write_csv(out / "summary.csv", ["metric", "value"], summary_rows)
    write_config(out / "run_manifest.txt", cfg.to_items())
