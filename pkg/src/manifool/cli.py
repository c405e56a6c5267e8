"""Command-line entry point.

Subcommands: gen-data, train, craft, augment, evaluate, report. All accept
``--config`` (flat ``key = value`` file), ``--seed``, ``--out`` and
``--threads``; command-line flags override the config file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .augment import augment_erasing, augment_manifool, augment_random
from .classifiers import load_classifier, save_classifier
from .datasets import LabeledDataset, load_dataset, save_dataset
from .experiment import (
    SEED_AUGMENT,
    SEED_CRAFTER,
    SEED_EVALUATED,
    ExperimentConfig,
    _train_model,
    crafted_robustness,
    derived_seed,
    evaluate_under_transforms,
    load_splits,
    run_experiment,
)
from .geodesic import r_tau, write_curve_csv
from .io import read_config, write_config, write_csv

log = logging.getLogger(__name__)


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    items = read_config(args.config) if args.config else {}
    cfg = ExperimentConfig.from_items(items)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def _cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    train_split, test_split = load_splits(cfg)
    save_dataset(cfg.out, train_split, test_split)
    print(f"wrote {len(train_split)} train / {len(test_split)} test images to {cfg.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    dataset = load_dataset(args.data, "train")
    spec = cfg.crafter if args.role == "crafter" else cfg.evaluated
    tag = SEED_CRAFTER if args.role == "crafter" else SEED_EVALUATED
    model = _train_model(spec, dataset, derived_seed(cfg.seed, tag))
    save_classifier(model, cfg.out)
    print(f"trained {spec.arch} ({args.role}), train accuracy {model.train_accuracy:.4f}")
    return 0


def _cmd_craft(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    dataset = load_dataset(args.data, args.split)
    model = load_classifier(args.model)
    _, n_success, results = crafted_robustness(model, dataset, cfg.craft, cfg.threads)
    eligible = [i for i in range(len(dataset)) if model.predict(dataset.images[i]) == dataset.labels[i]]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    by_index = dict(zip(eligible, results))
    for i in range(len(dataset)):
        result = by_index.get(i)
        if result is None:
            rows.append((i, int(dataset.labels[i]), "misclassified", "", "", ""))
        else:
            status = "success" if result.success else "failed"
            rows.append(
                (i, int(dataset.labels[i]), status, result.target_class, result.iterations, result.distance)
            )
    write_csv(out / "crafted.csv", ["index", "label", "status", "target_class", "iterations", "distance"], rows)
    print(f"crafted {n_success}/{len(eligible)} eligible images; results in {out / 'crafted.csv'}")
    return 0


def _cmd_augment(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    train_split = load_dataset(args.data, "train")
    test_split = load_dataset(args.data, "test")
    seed = derived_seed(cfg.seed, SEED_AUGMENT)
    if cfg.mode == "manifool":
        if not args.model:
            raise SystemExit("augment mode 'manifool' needs --model pointing at a trained crafter")
        crafter = load_classifier(args.model)
        augmented, _ = augment_manifool(train_split, crafter, cfg.craft, seed, cfg.threads)
    elif cfg.mode == "random":
        augmented = augment_random(train_split, seed)
    elif cfg.mode == "erasing":
        augmented = augment_erasing(train_split, seed)
    else:
        augmented = LabeledDataset(
            list(train_split.images),
            train_split.labels,
            list(train_split.class_names),
            ["original"] * len(train_split),
        )
    save_dataset(cfg.out, augmented, test_split)
    print(f"wrote augmented dataset ({cfg.mode}, {len(augmented)} train images) to {cfg.out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    test_split = load_dataset(args.data, "test")
    model = load_classifier(args.model)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    clean = model.accuracy(test_split)
    from .experiment import SEED_MONTE_CARLO

    rows, curve = evaluate_under_transforms(
        model, test_split, cfg.eval_distances, cfg.trials,
        derived_seed(cfg.seed, SEED_MONTE_CARLO), cfg.threads, cfg.craft.n_segments,
    )
    acc_rows = [(cfg.mode, "test", "none", 0.0, clean, len(test_split))]
    acc_rows += [(cfg.mode, "test", kind, r, acc, n) for kind, r, acc, n in rows]
    write_csv(out / "accuracy.csv", ["mode", "split", "transform_kind", "distance", "accuracy", "n"], acc_rows)
    write_curve_csv(out / "curve.csv", curve)
    threshold_distance = r_tau(curve) if curve else None
    write_config(
        out / "summary.txt",
        {"clean_accuracy": clean, "r_tau": threshold_distance if threshold_distance is not None else "not_reached"},
    )
    print(f"clean accuracy {clean:.4f}; reports in {out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    summary = run_experiment(cfg)
    print(
        f"mode={summary['mode']} clean_accuracy={summary['clean_accuracy']:.4f} "
        f"rho={summary['rho']} r_tau={summary['r_tau']}; reports in {summary['out']}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manifool", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads")
        p.set_defaults(handler=handler)
        return p

    add("gen-data", _cmd_gen_data, "generate a synthetic shape dataset")
    p_train = add("train", _cmd_train, "train a classifier on a dataset directory")
    p_train.add_argument("--data", required=True, help="dataset directory")
    p_train.add_argument("--role", choices=("crafter", "eval"), default="eval")
    p_craft = add("craft", _cmd_craft, "craft boundary samples against a trained model")
    p_craft.add_argument("--data", required=True)
    p_craft.add_argument("--model", required=True)
    p_craft.add_argument("--split", default="train")
    p_aug = add("augment", _cmd_augment, "write an augmented copy of a dataset")
    p_aug.add_argument("--data", required=True)
    p_aug.add_argument("--model", default=None, help="crafter model directory (manifool mode)")
    p_eval = add("evaluate", _cmd_evaluate, "evaluate a trained model on a dataset")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--model", required=True)
    add("report", _cmd_report, "run a full experiment and write all reports")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
