"""Geometric data augmentation by boundary exploration on transformation
groups, with geodesic robustness metrics for image classifiers.
"""

from . import errors
from .augment import augment_erasing, augment_manifool, augment_random
from .classifiers import (
    Classifier,
    LinearClassifier,
    MLPClassifier,
    TrainConfig,
    class_weights_median_frequency,
    load_classifier,
    save_classifier,
    train,
)
from .crafting import (
    CraftConfig,
    ManiFoolResult,
    backtrack,
    craft_multiclass,
    craft_pair,
    movement_direction,
    step,
)
from .datasets import (
    DatasetManifest,
    LabeledDataset,
    generate_synthetic_dataset,
    load_dataset,
    load_manifest,
    save_dataset,
)
from .experiment import ExperimentConfig, run_experiment
from .geodesic import (
    CurvePoint,
    RobustnessReport,
    misclassification_curve,
    normalized_distance,
    path_length,
    path_length_between,
    piecewise_path_length,
    r_tau,
    random_transform_at_distance,
    robustness_score,
)
from .groups import (
    GeneratorSet,
    GroupKind,
    Transform,
    compose,
    exp_map,
    invert,
    log_map,
    make_basis,
    rotation_transform,
    translation_transform,
)
from .warp import appearance_jacobian, spatial_gradient, warp_image

__version__ = "0.1.0"

__all__ = [
    "Classifier",
    "CraftConfig",
    "CurvePoint",
    "DatasetManifest",
    "ExperimentConfig",
    "GeneratorSet",
    "GroupKind",
    "LabeledDataset",
    "LinearClassifier",
    "MLPClassifier",
    "ManiFoolResult",
    "RobustnessReport",
    "TrainConfig",
    "Transform",
    "appearance_jacobian",
    "augment_erasing",
    "augment_manifool",
    "augment_random",
    "backtrack",
    "class_weights_median_frequency",
    "compose",
    "craft_multiclass",
    "craft_pair",
    "errors",
    "exp_map",
    "generate_synthetic_dataset",
    "invert",
    "load_classifier",
    "load_dataset",
    "load_manifest",
    "log_map",
    "make_basis",
    "misclassification_curve",
    "movement_direction",
    "normalized_distance",
    "path_length",
    "path_length_between",
    "piecewise_path_length",
    "r_tau",
    "random_transform_at_distance",
    "robustness_score",
    "rotation_transform",
    "run_experiment",
    "save_classifier",
    "save_dataset",
    "spatial_gradient",
    "step",
    "train",
    "translation_transform",
    "warp_image",
]
