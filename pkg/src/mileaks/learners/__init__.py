"""Trainable classifiers sharing one fit / predict-posteriors contract.

Every model here (and :class:`mileaks.defenses.StackedModel`) exposes
``kind``, ``input_dim``, ``num_classes``, ``predict_proba(X)`` and
``to_dict()``, which is all the rest of the package relies on.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from ..core import Dataset, PosteriorVector, TrainConfig, ValidationError
from .forest import RandomForest, Tree, fit_forest
from .neural import NeuralNet, TrainingDivergence, fit_network, flatten, loss_and_gradient, unflatten

Classifier = Union[NeuralNet, RandomForest]

__all__ = [
    "Classifier",
    "NeuralNet",
    "RandomForest",
    "Tree",
    "TrainingDivergence",
    "accuracy",
    "load_model",
    "loss_gradient",
    "model_from_dict",
    "predict",
    "save_model",
    "train",
]


def _part_indices(dataset: Dataset, part) -> np.ndarray:
    idx = np.arange(len(dataset)) if part is None else np.asarray(part, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ValidationError("empty index set")
    if idx.min() < 0 or idx.max() >= len(dataset):
        raise ValidationError("index set out of range for dataset")
    return idx


def train(dataset: Dataset, part, config: TrainConfig) -> Classifier:
    """Fit a classifier of ``config.learner_kind`` on ``dataset`` rows ``part`` (all rows if None)."""
    idx = _part_indices(dataset, part)
    X = dataset.features[idx]
    y = dataset.labels[idx]
    if config.learner_kind == "forest":
        return fit_forest(X, y, dataset.num_classes, config)
    return fit_network(X, y, dataset.num_classes, config)


def _check_input(model, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.input_dim:
        raise ValidationError(f"expected {model.input_dim} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features must be finite")
    return X


def predict(model, features) -> PosteriorVector:
    X = _check_input(model, features)
    if X.shape[0] != 1:
        raise ValidationError("predict takes a single feature vector")
    return PosteriorVector(model.predict_proba(X)[0])


def accuracy(model, dataset: Dataset, part=None) -> float:
    """Fraction of rows whose argmax posterior (lowest index on ties) equals the label."""
    idx = _part_indices(dataset, part)
    p = model.predict_proba(dataset.features[idx])
    return float(np.mean(np.argmax(p, axis=1) == dataset.labels[idx]))


def loss_gradient(model: NeuralNet, X, y, l2_lambda: float = 0.0, masks=None) -> np.ndarray:
    """Flat gradient of mean cross-entropy (+ L2) w.r.t. all parameters of ``model``."""
    if not isinstance(model, NeuralNet):
        raise ValidationError("loss_gradient is defined for logistic and mlp models only")
    layers = [(W.copy(), b.copy()) for W, b in model.layers]
    _, grads = loss_and_gradient(layers, np.asarray(X, float), np.asarray(y), l2_lambda, masks)
    return flatten(grads)


def model_loss(model: NeuralNet, X, y, l2_lambda: float = 0.0, masks=None) -> float:
    loss, _ = loss_and_gradient(list(model.layers), np.asarray(X, float), np.asarray(y), l2_lambda, masks)
    return float(loss)


def with_params(model: NeuralNet, vec: np.ndarray) -> NeuralNet:
    return NeuralNet(model.kind, unflatten(np.asarray(vec, float), model.widths))


def model_from_dict(d: dict):
    kind = d.get("kind")
    if kind in ("logistic", "mlp"):
        return NeuralNet.from_dict(d)
    if kind == "forest":
        return RandomForest.from_dict(d)
    if kind == "stacked":
        from ..defenses import StackedModel

        return StackedModel.from_dict(d)
    raise ValidationError(f"unknown model kind {kind!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
