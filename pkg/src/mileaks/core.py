"""Shared domain vocabulary: points, datasets, posteriors, split plans, configs."""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

POSTERIOR_TOL = 1e-9

LEARNER_KINDS = ("logistic", "mlp", "forest")
FEATURE_KINDS = ("unit_interval", "binary", "unbounded")


class ValidationError(ValueError):
    """An input violates a documented invariant."""


class MembershipLabel(enum.IntEnum):
    NON_MEMBER = 0
    MEMBER = 1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureSpaceSpec:
    kind: str
    dimensionality: int

    def __post_init__(self):
        if self.kind not in FEATURE_KINDS:
            raise ValidationError(f"feature kind must be one of {FEATURE_KINDS}, got {self.kind!r}")
        if self.dimensionality < 1:
            raise ValidationError("dimensionality must be >= 1")


@dataclass(frozen=True)
class LabeledPoint:
    features: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class PosteriorVector:
    """Per-class probabilities; entries in [0, 1] summing to 1 within 1e-9."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("posterior must be a non-empty vector")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise ValidationError("posterior entries must lie in [0, 1]")
        if abs(p.sum() - 1.0) > POSTERIOR_TOL:
            raise ValidationError(f"posterior sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", _frozen(p))

    def __len__(self) -> int:
        return self.probs.size

    def __iter__(self):
        return iter(self.probs.tolist())

    def __eq__(self, other):
        if not isinstance(other, PosteriorVector):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __repr__(self):
        return f"PosteriorVector({self.probs.tolist()})"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus dense integer labels.

    Points are stored column-major-free as an ``(n, d)`` float array; ``points``
    yields :class:`LabeledPoint` views for code that wants them one at a time.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    feature_space: FeatureSpaceSpec
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValidationError("features must be a 2-d array")
        if y.shape != (X.shape[0],):
            raise ValidationError("one label per point required")
        if self.num_classes < 2:
            raise ValidationError("a dataset needs at least 2 classes")
        if X.shape[1] != self.feature_space.dimensionality:
            raise ValidationError(
                f"features have d={X.shape[1]} but feature space declares "
                f"d={self.feature_space.dimensionality}"
            )
        if not np.all(np.isfinite(X)):
            raise ValidationError("features must be finite")
        if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= self.num_classes):
            raise ValidationError(f"labels must be integers in [0, {self.num_classes})")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", _frozen(y.astype(np.int64)))

    def __len__(self) -> int:
        return self.features.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.feature_space == other.feature_space
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def points(self) -> Iterator[LabeledPoint]:
        for x, y in zip(self.features, self.labels):
            yield LabeledPoint(x, int(y))

    def point(self, i: int) -> LabeledPoint:
        return LabeledPoint(self.features[i], int(self.labels[i]))

    def with_feature_kind(self, kind: str) -> "Dataset":
        return dataclasses.replace(self, feature_space=FeatureSpaceSpec(kind, self.dim))


@dataclass(frozen=True, eq=False)
class SplitPlan:
    """Named, pairwise-disjoint index sets into one dataset; each part is kept sorted."""

    parts: Mapping[str, np.ndarray]
    size: int | None = None

    def __post_init__(self):
        parts = {}
        seen: set[int] = set()
        for name, idx in self.parts.items():
            idx = np.asarray(idx, dtype=np.int64).reshape(-1)
            if idx.size and idx.min() < 0:
                raise ValidationError(f"part {name!r} has negative indices")
            if self.size is not None and idx.size and idx.max() >= self.size:
                raise ValidationError(f"part {name!r} indexes beyond dataset size {self.size}")
            as_set = set(idx.tolist())
            if len(as_set) != idx.size:
                raise ValidationError(f"part {name!r} repeats an index")
            if seen & as_set:
                raise ValidationError(f"part {name!r} overlaps an earlier part")
            seen |= as_set
            parts[name] = _frozen(np.sort(idx))
        object.__setattr__(self, "parts", parts)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.parts[name]
        except KeyError:
            raise ValidationError(f"split plan has no part {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.parts

    def __eq__(self, other):
        if not isinstance(other, SplitPlan):
            return NotImplemented
        return self.parts.keys() == other.parts.keys() and all(
            np.array_equal(self.parts[k], other.parts[k]) for k in self.parts
        )

    def names(self) -> list[str]:
        return list(self.parts)

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "parts": {k: v.tolist() for k, v in self.parts.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        return cls({k: np.asarray(v, dtype=np.int64) for k, v in d["parts"].items()}, d.get("size"))


@dataclass(frozen=True)
class TrainConfig:
    learner_kind: str = "mlp"
    epochs: int = 100
    batch_size: int = 10
    learning_rate: float = 0.05
    l2_lambda: float = 0.0
    hidden_units: int = 128
    dropout_input: float = 0.0
    dropout_hidden: float = 0.0
    trees: int = 32
    max_depth: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learner_kind not in LEARNER_KINDS:
            raise ValidationError(f"learner_kind must be one of {LEARNER_KINDS}, got {self.learner_kind!r}")
        for name in ("epochs", "batch_size", "hidden_units", "trees", "max_depth"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not self.l2_lambda >= 0:
            raise ValidationError("l2_lambda must be non-negative")
        for name in ("dropout_input", "dropout_hidden"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValidationError(f"{name} must lie in [0, 1)")
            if v and self.learner_kind != "mlp":
                raise ValidationError(f"{name} applies to mlp learners only")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        return cls(**strict_kwargs(cls, d))


def strict_kwargs(cls, d: Mapping, what: str | None = None) -> dict:
    """Reject keys that are not fields of dataclass ``cls``."""
    if not isinstance(d, Mapping):
        raise ValidationError(f"{what or cls.__name__}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ValidationError(f"{what or cls.__name__}: unknown key(s) {', '.join(unknown)}")
    return dict(d)


def derive_seed(base: int, *keys: int) -> int:
    """Child seed from a base seed and an integer path; stable across runs."""
    ss = np.random.SeedSequence(int(base), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def check_disjoint(*parts: np.ndarray) -> None:
    seen: set[int] = set()
    for i, p in enumerate(parts):
        s = set(np.asarray(p).tolist())
        if seen & s:
            raise ValidationError(f"index set {i} overlaps an earlier one")
        seen |= s
