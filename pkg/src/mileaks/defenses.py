"""Dropout presets and the disjointly-trained model-stacking ensemble."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import learners
from .core import (
    Dataset,
    FeatureSpaceSpec,
    PosteriorVector,
    TrainConfig,
    ValidationError,
    check_disjoint,
    derive_seed,
    strict_kwargs,
)

DEFAULT_DROPOUT = 0.5


def dropout_preset(ratio_input: float = DEFAULT_DROPOUT, ratio_hidden: float = DEFAULT_DROPOUT) -> dict:
    """TrainConfig overrides for dropout on the input and hidden layers."""
    for r in (ratio_input, ratio_hidden):
        if not 0.0 <= r < 1.0:
            raise ValidationError(f"dropout ratio must lie in [0, 1), got {r}")
    return {"dropout_input": float(ratio_input), "dropout_hidden": float(ratio_hidden)}


def apply_dropout(cfg: TrainConfig, ratio_input: float = DEFAULT_DROPOUT, ratio_hidden: float = DEFAULT_DROPOUT) -> TrainConfig:
    if cfg.learner_kind != "mlp":
        raise ValidationError("dropout applies to mlp learners only")
    return cfg.replace(**dropout_preset(ratio_input, ratio_hidden))


class StackedModel:
    """Two base classifiers feeding their concatenated posteriors to a meta classifier."""

    kind = "stacked"

    def __init__(self, base1, base2, meta, part_names=("part1", "part2", "part3")):
        if base1.input_dim != base2.input_dim:
            raise ValidationError("base models disagree on input dimensionality")
        if base1.num_classes != base2.num_classes:
            raise ValidationError("base models disagree on the number of classes")
        if meta.input_dim != base1.num_classes + base2.num_classes:
            raise ValidationError(
                f"meta model expects {meta.input_dim} inputs, bases emit "
                f"{base1.num_classes + base2.num_classes}"
            )
        self.base1, self.base2, self.meta = base1, base2, meta
        self.part_names = tuple(part_names)
        self.input_dim = base1.input_dim
        self.num_classes = meta.num_classes

    def meta_features(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.hstack([self.base1.predict_proba(X), self.base2.predict_proba(X)])

    def predict_proba(self, X) -> np.ndarray:
        return self.meta.predict_proba(self.meta_features(X))

    def to_dict(self) -> dict:
        return {
            "kind": "stacked",
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "parts": list(self.part_names),
            "base1": self.base1.to_dict(),
            "base2": self.base2.to_dict(),
            "meta": self.meta.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StackedModel":
        return cls(
            learners.model_from_dict(d["base1"]),
            learners.model_from_dict(d["base2"]),
            learners.model_from_dict(d["meta"]),
            d.get("parts", ("part1", "part2", "part3")),
        )


def stacked_predict(model: StackedModel, x) -> PosteriorVector:
    return learners.predict(model, x)


def meta_training_set(base1, base2, dataset: Dataset, part) -> Dataset:
    """Rows of ``part`` mapped to base1-then-base2 posteriors, with their original labels."""
    X = dataset.features[np.asarray(part, dtype=np.int64)]
    Z = np.hstack([base1.predict_proba(X), base2.predict_proba(X)])
    return Dataset(
        Z,
        dataset.labels[np.asarray(part, dtype=np.int64)],
        dataset.num_classes,
        FeatureSpaceSpec("unit_interval", Z.shape[1]),
        name=f"{dataset.name}-meta",
    )


def train_stacked(dataset: Dataset, parts, cfg1: TrainConfig, cfg2: TrainConfig, cfg_meta: TrainConfig, seed: int) -> StackedModel:
    """Fit base1 on parts[0], base2 on parts[1], meta on parts[2] mapped through both bases."""
    if len(parts) != 3:
        raise ValidationError("stacking needs exactly three index sets")
    parts = [np.asarray(p, dtype=np.int64).reshape(-1) for p in parts]
    for p in parts:
        if p.size == 0:
            raise ValidationError("stacking parts must be non-empty")
    check_disjoint(*parts)
    base1 = learners.train(dataset, parts[0], cfg1.replace(seed=derive_seed(seed, 1)))
    base2 = learners.train(dataset, parts[1], cfg2.replace(seed=derive_seed(seed, 2)))
    meta_ds = meta_training_set(base1, base2, dataset, parts[2])
    meta = learners.train(meta_ds, None, cfg_meta.replace(seed=derive_seed(seed, 3)))
    return StackedModel(base1, base2, meta)


def _default_base1():
    return TrainConfig("mlp", epochs=300, batch_size=10, learning_rate=0.05, hidden_units=128)


def _default_base2():
    return TrainConfig("forest", trees=32, max_depth=32)


def _default_meta():
    return TrainConfig("logistic", epochs=300, batch_size=10, learning_rate=0.1)


@dataclass(frozen=True)
class StackingConfig:
    """Recipe for a stacked model.

    ``fit`` takes either three explicit disjoint parts or one index set, which
    it cuts into three contiguous near-equal parts.
    """

    base1: TrainConfig = field(default_factory=_default_base1)
    base2: TrainConfig = field(default_factory=_default_base2)
    meta: TrainConfig = field(default_factory=_default_meta)
    seed: int = 0

    def replace(self, **changes) -> "StackingConfig":
        return dataclasses.replace(self, **changes)

    def fit(self, dataset: Dataset, part) -> StackedModel:
        if isinstance(part, (list, tuple)) and len(part) == 3 and all(np.ndim(p) == 1 for p in part):
            parts = list(part)
        else:
            parts = np.array_split(np.asarray(part, dtype=np.int64), 3)
        return train_stacked(dataset, parts, self.base1, self.base2, self.meta, self.seed)

    def to_dict(self) -> dict:
        return {
            "base1": self.base1.to_dict(),
            "base2": self.base2.to_dict(),
            "meta": self.meta.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "StackingConfig":
        d = strict_kwargs(cls, d, "stacking")
        out = {}
        for k in ("base1", "base2", "meta"):
            if k in d:
                out[k] = TrainConfig.from_dict(d[k])
        if "seed" in d:
            out["seed"] = int(d["seed"])
        return cls(**out)


ModelRecipe = Union[TrainConfig, StackingConfig]


def fit_model(recipe: ModelRecipe, dataset: Dataset, part):
    """Train whatever ``recipe`` describes on rows ``part``."""
    if isinstance(recipe, StackingConfig):
        return recipe.fit(dataset, part)
    return learners.train(dataset, part, recipe)


def reseed(recipe: ModelRecipe, seed: int) -> ModelRecipe:
    return recipe.replace(seed=int(seed))
