"""Random forest of Gini-split decision trees."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import TrainConfig, ValidationError, rng_for

LEAF = -1


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array tree. ``feature[i] == LEAF`` marks a leaf; ``value[i]`` is its class distribution."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "value"):
            a = np.array(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def leaf(cls, dist) -> "Tree":
        dist = np.asarray(dist, dtype=np.float64)
        return cls(
            np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]), dist[None, :]
        )

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.nonzero(active)[0]
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] != LEAF
        return node

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, num_classes: int) -> "Tree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=np.float64).reshape(-1, num_classes),
        )


def _best_split(X, y, idx, features, num_classes):
    """Lowest weighted Gini over candidate midpoints; None if every feature is constant."""
    n = idx.size
    best = None
    onehot = np.eye(num_classes)[y[idx]]
    for f in features:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        valid = sv[:-1] < sv[1:]
        if not valid.any():
            continue
        left_counts = np.cumsum(onehot[order], axis=0)[:-1]
        right_counts = left_counts[-1] + onehot[order[-1]] - left_counts
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        gini_l = 1.0 - np.sum(left_counts**2, axis=1) / nl**2
        gini_r = 1.0 - np.sum(right_counts**2, axis=1) / nr**2
        score = (nl * gini_l + nr * gini_r) / n
        score[~valid] = np.inf
        i = int(np.argmin(score))
        if best is None or score[i] < best[0]:
            thr = 0.5 * (sv[i] + sv[i + 1])
            if not sv[i] <= thr < sv[i + 1]:
                thr = sv[i]
            best = (score[i], int(f), float(thr))
    return best


def grow_tree(X, y, num_classes, max_depth, max_features, rng) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        counts = np.bincount(y[idx], minlength=num_classes).astype(np.float64)
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(counts / counts.sum())
        return len(feature) - 1

    root_idx = np.arange(X.shape[0])
    stack = [(new_node(root_idx), root_idx, 0)]
    d = X.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or idx.size < 2 or value[node].max() == 1.0:
            continue
        feats = rng.choice(d, size=max_features, replace=False)
        split = _best_split(X, y, idx, feats, num_classes)
        if split is None:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.float64),
    )


class RandomForest:
    kind = "forest"

    def __init__(self, trees: list[Tree], input_dim: int, num_classes: int):
        if not trees:
            raise ValidationError("a forest needs at least one tree")
        for t in trees:
            if t.value.shape[1] != num_classes:
                raise ValidationError("tree leaf distributions disagree with num_classes")
        self._trees = tuple(trees)
        self.input_dim = input_dim
        self.num_classes = num_classes

    @property
    def trees(self):
        return self._trees

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        p = np.zeros((X.shape[0], self.num_classes))
        for t in self._trees:
            p += t.predict_proba(X)
        p /= len(self._trees)
        return p / p.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "trees": [t.to_dict() for t in self._trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        c = int(d["num_classes"])
        return cls([Tree.from_dict(t, c) for t in d["trees"]], int(d["input_dim"]), c)


def fit_forest(X: np.ndarray, y: np.ndarray, num_classes: int, cfg: TrainConfig) -> RandomForest:
    rng = rng_for(cfg.seed)
    n, d = X.shape
    max_features = max(1, int(round(math.sqrt(d))))
    trees = []
    for _ in range(cfg.trees):
        boot = rng.integers(0, n, size=n)
        trees.append(grow_tree(X[boot], y[boot], num_classes, cfg.max_depth, max_features, rng))
    return RandomForest(trees, d, num_classes)
