"""Differentiable classifiers with exact input gradients.

Two small reference architectures are provided: multinomial logistic
regression and a one-hidden-layer tanh perceptron, both trained with
weighted cross-entropy by mini-batch SGD with momentum. The boundary
search only needs pre-softmax class scores and the gradient of a score
difference with respect to the input pixels, so any external model
implementing :class:`Classifier` can be used in their place.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import LabeledDataset
from .errors import DivergedError, EmptyClassError
from .io import read_config, read_tensor, write_config, write_tensor
from .warp import as_hwc

_MOMENTUM = 0.9  # fixed SGD momentum coefficient

UNIFORM = "uniform"
MEDIAN_FREQUENCY = "median-frequency"


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 0.1
    seed: int = 0
    weight_decay: float = 0.0
    weighting: str = MEDIAN_FREQUENCY

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be positive and weight_decay >= 0")
        if self.weighting not in (UNIFORM, MEDIAN_FREQUENCY):
            raise ValueError(f"unknown class weighting {self.weighting!r}")


class Classifier(abc.ABC):
    """Deterministic scorer with exact input-pixel gradients."""

    n_classes: int
    input_shape: tuple[int, int, int]
    train_accuracy: float | None = None

    @abc.abstractmethod
    def scores(self, img: np.ndarray) -> np.ndarray:
        """Pre-softmax class scores, shape (n_classes,)."""

    @abc.abstractmethod
    def input_gradient(self, img: np.ndarray, l: int, k: int) -> np.ndarray:
        """Gradient of scores[l] - scores[k] w.r.t. every pixel, image-shaped."""

    @abc.abstractmethod
    def scores_matrix(self, flat_inputs: np.ndarray) -> np.ndarray:
        """Scores for a batch of flattened inputs, shape (n, n_classes)."""

    def predict(self, img: np.ndarray) -> int:
        return int(np.argmax(self.scores(img)))

    def accuracy(self, dataset: LabeledDataset) -> float:
        flat = np.stack([as_hwc(im).ravel() for im in dataset.images])
        predictions = np.argmax(self.scores_matrix(flat), axis=1)
        return float(np.mean(predictions == dataset.labels))

    def _flatten(self, img: np.ndarray) -> np.ndarray:
        arr = as_hwc(img)
        if arr.shape != self.input_shape:
            raise ValueError(f"expected image shape {self.input_shape}, got {arr.shape}")
        return arr.ravel()

    def _check_pair(self, l: int, k: int) -> None:
        if not (0 <= l < self.n_classes and 0 <= k < self.n_classes):
            raise ValueError(f"class indices out of range: {l}, {k}")
        if l == k:
            raise ValueError("score-difference gradient needs two distinct classes")


class LinearClassifier(Classifier):
    """Multinomial logistic regression: scores = W x + b."""

    def __init__(self, weights: np.ndarray, biases: np.ndarray, input_shape: tuple[int, int, int]):
        self.weights = np.asarray(weights, dtype=float)
        self.biases = np.asarray(biases, dtype=float)
        self.input_shape = tuple(input_shape)
        self.n_classes = self.weights.shape[0]

    def scores(self, img: np.ndarray) -> np.ndarray:
        return self.weights @ self._flatten(img) + self.biases

    def scores_matrix(self, flat_inputs: np.ndarray) -> np.ndarray:
        return flat_inputs @ self.weights.T + self.biases

    def input_gradient(self, img: np.ndarray, l: int, k: int) -> np.ndarray:
        self._check_pair(l, k)
        return (self.weights[l] - self.weights[k]).reshape(self.input_shape)


class MLPClassifier(Classifier):
    """One hidden tanh layer: scores = W2 tanh(W1 x + b1) + b2."""

    def __init__(
        self,
        w1: np.ndarray,
        b1: np.ndarray,
        w2: np.ndarray,
        b2: np.ndarray,
        input_shape: tuple[int, int, int],
    ):
        self.w1 = np.asarray(w1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)
        self.input_shape = tuple(input_shape)
        self.n_classes = self.w2.shape[0]

    @property
    def hidden_units(self) -> int:
        return self.w1.shape[0]

    def scores(self, img: np.ndarray) -> np.ndarray:
        hidden = np.tanh(self.w1 @ self._flatten(img) + self.b1)
        return self.w2 @ hidden + self.b2

    def scores_matrix(self, flat_inputs: np.ndarray) -> np.ndarray:
        hidden = np.tanh(flat_inputs @ self.w1.T + self.b1)
        return hidden @ self.w2.T + self.b2

    def input_gradient(self, img: np.ndarray, l: int, k: int) -> np.ndarray:
        self._check_pair(l, k)
        hidden = np.tanh(self.w1 @ self._flatten(img) + self.b1)
        delta = (self.w2[l] - self.w2[k]) * (1.0 - hidden * hidden)
        return (delta @ self.w1).reshape(self.input_shape)


def class_weights_median_frequency(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Per-class weights median(freq) / freq_c; every class must be present.

    Computed in the count domain (the total cancels), which keeps simple
    integer ratios exact.
    """
    counts = np.bincount(np.asarray(labels, dtype=int), minlength=n_classes)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise EmptyClassError(f"classes with zero samples: {missing}")
    return np.median(counts) / counts


def _init_model(
    arch: str, input_shape: tuple[int, int, int], n_classes: int, hidden_units: int, rng: np.random.Generator
) -> Classifier:
    dim = int(np.prod(input_shape))
    if arch == "linear":
        return LinearClassifier(
            rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n_classes, dim)),
            np.zeros(n_classes),
            input_shape,
        )
    if arch == "mlp":
        return MLPClassifier(
            rng.normal(0.0, 1.0 / np.sqrt(dim), size=(hidden_units, dim)),
            np.zeros(hidden_units),
            rng.normal(0.0, 1.0 / np.sqrt(hidden_units), size=(n_classes, hidden_units)),
            np.zeros(n_classes),
            input_shape,
        )
    raise ValueError(f"unknown architecture {arch!r}")


def train(
    dataset: LabeledDataset,
    arch: str = "mlp",
    cfg: TrainConfig | None = None,
    hidden_units: int = 32,
) -> Classifier:
    """Minimize weighted cross-entropy with mini-batch momentum SGD.

    Deterministic for a fixed ``cfg.seed``. Raises :class:`DivergedError` if
    the loss becomes non-finite. The returned classifier carries its final
    training accuracy in ``train_accuracy``.
    """
    cfg = cfg or TrainConfig()
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    shapes = {as_hwc(im).shape for im in dataset.images}
    if len(shapes) != 1:
        raise ValueError(f"all images must share one shape, got {sorted(shapes)}")
    input_shape = shapes.pop()
    n_classes = len(dataset.class_names)
    inputs = np.stack([as_hwc(im).ravel() for im in dataset.images])
    labels = dataset.labels
    if cfg.weighting == MEDIAN_FREQUENCY:
        class_weights = class_weights_median_frequency(labels, n_classes)
    else:
        class_weights = np.ones(n_classes)

    rng = np.random.default_rng(cfg.seed)
    model = _init_model(arch, input_shape, n_classes, hidden_units, rng)
    params = _parameters(model)
    velocity = [np.zeros_like(p) for p in params]

    for _ in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(model, inputs[batch], labels[batch], class_weights, cfg.weight_decay)
            if not np.isfinite(loss):
                raise DivergedError(f"training loss became non-finite ({loss})")
            for p, v, g in zip(params, velocity, grads):
                v *= _MOMENTUM
                v -= cfg.learning_rate * g
                p += v
    model.train_accuracy = model.accuracy(dataset)
    return model


def _parameters(model: Classifier) -> list[np.ndarray]:
    if isinstance(model, LinearClassifier):
        return [model.weights, model.biases]
    assert isinstance(model, MLPClassifier)
    return [model.w1, model.b1, model.w2, model.b2]


def _loss_and_grads(
    model: Classifier,
    x: np.ndarray,
    y: np.ndarray,
    class_weights: np.ndarray,
    weight_decay: float,
) -> tuple[float, list[np.ndarray]]:
    n = len(y)
    sample_w = class_weights[y]
    w_total = sample_w.sum()
    if isinstance(model, MLPClassifier):
        hidden = np.tanh(x @ model.w1.T + model.b1)
        logits = hidden @ model.w2.T + model.b2
    else:
        assert isinstance(model, LinearClassifier)
        logits = x @ model.weights.T + model.biases

    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    nll = -np.log(np.maximum(probs[np.arange(n), y], 1e-300))
    loss = float((sample_w * nll).sum() / w_total)

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits *= (sample_w / w_total)[:, None]

    if isinstance(model, MLPClassifier):
        loss += 0.5 * weight_decay * (np.sum(model.w1**2) + np.sum(model.w2**2))
        gw2 = dlogits.T @ hidden + weight_decay * model.w2
        gb2 = dlogits.sum(axis=0)
        dhidden = (dlogits @ model.w2) * (1.0 - hidden * hidden)
        gw1 = dhidden.T @ x + weight_decay * model.w1
        gb1 = dhidden.sum(axis=0)
        return loss, [gw1, gb1, gw2, gb2]

    loss += 0.5 * weight_decay * np.sum(model.weights**2)
    gw = dlogits.T @ x + weight_decay * model.weights
    gb = dlogits.sum(axis=0)
    return loss, [gw, gb]


_TENSOR_NAMES = {"linear": ("weights", "biases"), "mlp": ("w1", "b1", "w2", "b2")}


def save_classifier(model: Classifier, directory: str | Path) -> None:
    """Serialize to a directory: flat-text manifest plus one MFTN per tensor."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arch = "linear" if isinstance(model, LinearClassifier) else "mlp"
    h, w, c = model.input_shape
    manifest: dict[str, object] = {
        "arch": arch,
        "n_classes": model.n_classes,
        "height": h,
        "width": w,
        "channels": c,
    }
    if isinstance(model, MLPClassifier):
        manifest["hidden_units"] = model.hidden_units
    write_config(directory / "manifest.txt", manifest)
    for name, tensor in zip(_TENSOR_NAMES[arch], _parameters(model)):
        write_tensor(directory / f"{name}.mftn", tensor)


def load_classifier(directory: str | Path) -> Classifier:
    directory = Path(directory)
    manifest = read_config(directory / "manifest.txt")
    arch = manifest["arch"]
    input_shape = (int(manifest["height"]), int(manifest["width"]), int(manifest["channels"]))
    tensors = [read_tensor(directory / f"{name}.mftn") for name in _TENSOR_NAMES[arch]]
    if arch == "linear":
        return LinearClassifier(tensors[0], tensors[1], input_shape)
    return MLPClassifier(*tensors, input_shape)
