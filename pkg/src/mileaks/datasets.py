"""CSV ingestion, synthetic generators, K-means class derivation, split protocols."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import Dataset, FeatureSpaceSpec, SplitPlan, ValidationError, derive_seed, rng_for, strict_kwargs

SYNTHETIC_KINDS = ("gaussian_blobs", "binary_hypercube", "grid_images")

STANDARD_PARTS = ("shadow_train", "shadow_out", "target_train", "target_out")
STACKING_PARTS = tuple(f"t{i}" for i in range(1, 7)) + tuple(f"s{i}" for i in range(1, 7))


def infer_feature_kind(X: np.ndarray) -> str:
    if X.size and np.all((X == 0) | (X == 1)):
        return "binary"
    if X.size and X.min() >= 0 and X.max() <= 1:
        return "unit_interval"
    return "unbounded"


def load_csv(path, has_header: bool = False, label_column: int | str = -1, kind: str | None = None) -> Dataset:
    """Read one point per row; ``label_column`` may be an index (negative allowed) or a header name.

    Labels that are already the integers 0..c-1 are kept; any other label
    values are numbered by first occurrence.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if has_header:
        if not rows:
            raise ValidationError(f"{path}: empty file")
        header, rows = rows[0], rows[1:]
    else:
        header = None
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    arity = len(rows[0])
    for lineno, r in enumerate(rows, start=2 if has_header else 1):
        if len(r) != arity:
            raise ValidationError(f"{path}:{lineno}: expected {arity} fields, found {len(r)}")
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header is None or label_column not in header:
            raise ValidationError(f"{path}: label column {label_column!r} not found")
        col = header.index(label_column)
    else:
        col = int(label_column)
        if not -arity <= col < arity:
            raise ValidationError(f"{path}: label column {col} out of range")
        col %= arity
    if arity < 2:
        raise ValidationError(f"{path}: need at least one feature column besides the label")

    label_ids: dict[str, int] = {}
    labels = []
    feats = np.empty((len(rows), arity - 1))
    for i, r in enumerate(rows):
        raw = r[col].strip()
        labels.append(label_ids.setdefault(raw, len(label_ids)))
        cells = r[:col] + r[col + 1 :]
        try:
            feats[i] = [float(c) for c in cells]
        except ValueError:
            raise ValidationError(f"{path}: non-numeric feature on data row {i + 1}") from None
    if not np.all(np.isfinite(feats)):
        raise ValidationError(f"{path}: non-finite feature value")
    labels = np.asarray(labels, dtype=np.int64)
    dense = _already_dense(list(label_ids))
    if dense is not None:
        labels = dense[labels]
    kind = kind or infer_feature_kind(feats)
    return Dataset(
        feats,
        labels,
        len(label_ids),
        FeatureSpaceSpec(kind, feats.shape[1]),
        name=path.stem,
    )


def _already_dense(raw: list[str]):
    """Map first-occurrence ids back to integer labels if the cells are exactly 0..c-1."""
    try:
        ints = [int(r) for r in raw]
    except ValueError:
        return None
    if sorted(ints) != list(range(len(ints))) or any(str(i) != r for i, r in zip(ints, raw)):
        return None
    return np.asarray(ints, dtype=np.int64)


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_csv(dataset: Dataset, path) -> None:
    """Features then label per row; floats written with round-trip precision."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([_fmt(v) for v in x] + [int(y)])


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "gaussian_blobs"
    num_points: int = 400
    num_classes: int = 10
    dimensionality: int = 16
    class_separation: float = 1.0
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYNTHETIC_KINDS:
            raise ValidationError(f"synthetic kind must be one of {SYNTHETIC_KINDS}, got {self.kind!r}")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.num_points < self.num_classes:
            raise ValidationError("num_points must be >= num_classes")
        if self.dimensionality < 1:
            raise ValidationError("dimensionality must be >= 1")
        if self.class_separation < 0 or self.noise < 0:
            raise ValidationError("class_separation and noise must be non-negative")
        if self.kind == "binary_hypercube" and self.noise > 1:
            raise ValidationError("bit-flip probability must be <= 1")

    @classmethod
    def from_dict(cls, d) -> "SyntheticSpec":
        return cls(**strict_kwargs(cls, d))

    def to_dict(self) -> dict:
        return asdict(self)


def _templates(rng, c, d):
    """Distinct per-class bit patterns whenever 2**d allows it."""
    distinct = 2**d >= c if d < 64 else True
    while True:
        t = rng.integers(0, 2, size=(c, d))
        if not distinct or len({row.tobytes() for row in t}) == c:
            return t.astype(np.float64)


def generate(spec: SyntheticSpec) -> Dataset:
    rng = rng_for(spec.seed)
    n, c, d = spec.num_points, spec.num_classes, spec.dimensionality
    labels = rng.permutation(np.arange(n) % c)
    if spec.kind == "gaussian_blobs":
        # expected pairwise center distance is 0.1 * sqrt(2) * separation
        centers = 0.5 + 0.1 * spec.class_separation * rng.standard_normal((c, d))
        X = centers[labels] + spec.noise * rng.standard_normal((n, d))
        X = np.clip(X, 0.0, 1.0)
        kind = "unit_interval"
    elif spec.kind == "binary_hypercube":
        templates = _templates(rng, c, d)
        flips = rng.random((n, d)) < spec.noise
        X = np.abs(templates[labels] - flips)
        kind = "binary"
    else:
        templates = np.clip(0.5 + 0.1 * spec.class_separation * rng.standard_normal((c, d)), 0.0, 1.0)
        X = np.clip(templates[labels] + spec.noise * rng.uniform(-1.0, 1.0, (n, d)), 0.0, 1.0)
        kind = "unit_interval"
    return Dataset(X, labels, c, FeatureSpaceSpec(kind, d), name=spec.kind)


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    inertia_history: list
    iterations: int


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def lloyd(X, k: int, seed: int = 0, max_iters: int = 100, init=None) -> KMeansResult:
    """Lloyd iterations; ``inertia_history[t]`` is the within-cluster error after assignment t.

    Initial centers are the points at indices ``init`` if given, else k distinct
    points drawn from the seeded stream.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k > n:
        raise ValidationError(f"k={k} exceeds the number of points ({n})")
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    if init is None:
        init = rng_for(seed).choice(n, size=k, replace=False)
    centers = X[np.asarray(init, dtype=np.int64)].copy()
    assign = None
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        dist = _sq_dists(X, centers)
        new = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(n), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        own = dist[np.arange(n), assign]
        taken: set[int] = set()
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
            else:
                order = np.argsort(-own, kind="stable")
                far = next(int(i) for i in order if int(i) not in taken)
                taken.add(far)
                centers[j] = X[far]
    else:
        # ran out of iterations without a confirming pass
        assign = np.argmin(_sq_dists(X, centers), axis=1)
    return KMeansResult(assign.astype(np.int64), centers, history, it)


EXHAUSTIVE_INIT_LIMIT = 64


def kmeans(features, k: int, seed: int = 0, max_iters: int = 100, n_init: int = 10) -> np.ndarray:
    """Lowest-error result over several Lloyd runs (earliest run wins ties).

    When there are at most ``EXHAUSTIVE_INIT_LIMIT`` ways to pick k initial
    points, every one is tried; otherwise ``n_init`` seeded draws are.
    """
    if n_init < 1:
        raise ValidationError("n_init must be >= 1")
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if 1 <= k <= n and math.comb(n, k) <= EXHAUSTIVE_INIT_LIMIT:
        runs = [dict(init=list(c)) for c in itertools.combinations(range(n), k)]
    else:
        runs = [dict(seed=derive_seed(seed, r)) for r in range(n_init)]
    best, best_err = None, np.inf
    for run in runs:
        labels = lloyd(X, k, max_iters=max_iters, **run).labels
        err = within_cluster_error(X, labels)
        if err < best_err:
            best, best_err = labels, err
    return best


def _sizes(n: int, parts: int) -> list[int]:
    return [len(a) for a in np.array_split(np.arange(n), parts)]


def plan_standard_split(dataset_or_n, seed: int) -> SplitPlan:
    """Shuffle, halve into shadow/target, halve each again; extra elements go to earlier parts."""
    n = dataset_or_n if isinstance(dataset_or_n, int) else len(dataset_or_n)
    if n < 8:
        raise ValidationError(f"standard split needs at least 8 points, got {n}")
    perm = rng_for(seed).permutation(n)
    sizes = []
    for half in _sizes(n, 2):
        sizes += _sizes(half, 2)
    bounds = np.cumsum([0] + sizes)
    return SplitPlan(
        {name: perm[bounds[i] : bounds[i + 1]] for i, name in enumerate(STANDARD_PARTS)}, size=n
    )


def plan_stacking_split(dataset_or_n, seed: int) -> SplitPlan:
    """Twelve contiguous near-equal parts of a seeded shuffle: t1..t6 target side, s1..s6 shadow."""
    n = dataset_or_n if isinstance(dataset_or_n, int) else len(dataset_or_n)
    if n < 24:
        raise ValidationError(f"stacking split needs at least 24 points, got {n}")
    perm = rng_for(seed).permutation(n)
    return SplitPlan(dict(zip(STACKING_PARTS, np.array_split(perm, 12))), size=n)


def stacking_as_standard(plan: SplitPlan) -> SplitPlan:
    """View a 12-way plan through the standard part names (train = parts 1-3, out = parts 4-6)."""
    cat = lambda names: np.concatenate([plan[p] for p in names])  # noqa: E731
    return SplitPlan(
        {
            "shadow_train": cat(["s1", "s2", "s3"]),
            "shadow_out": cat(["s4", "s5", "s6"]),
            "target_train": cat(["t1", "t2", "t3"]),
            "target_out": cat(["t4", "t5", "t6"]),
        },
        size=plan.size,
    )


def save_plan(plan: SplitPlan, path) -> None:
    Path(path).write_text(json.dumps(plan.to_dict(), indent=1))


def load_plan(path) -> SplitPlan:
    return SplitPlan.from_dict(json.loads(Path(path).read_text()))


def within_cluster_error(X, labels) -> float:
    X = np.asarray(X, float)
    total = 0.0
    for j in np.unique(labels):
        pts = X[labels == j]
        total += float(((pts - pts.mean(axis=0)) ** 2).sum())
    return total
