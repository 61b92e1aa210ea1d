"""Membership inference adversaries.

Adversary 1 trains one shadow model that mimics the target, turns the
shadow's sorted top-k posteriors on its own members/non-members into a
labelled training set, and fits a binary attack model on it. Adversary 2 is
the same pipeline with a shadow trained on data from another distribution.
Adversary 3 trains nothing: it thresholds a posterior statistic, with the
threshold picked from the target's answers on random probes.

Adversaries only ever see the target through a black box (``query`` /
``input_dim`` / ``num_classes`` / ``query_count``).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import learners
from .blackbox import query_many
from .core import (
    Dataset,
    FeatureSpaceSpec,
    MembershipLabel,
    PosteriorVector,
    SplitPlan,
    TrainConfig,
    ValidationError,
    derive_seed,
    rng_for,
)
from .defenses import ModelRecipe, fit_model, reseed

log = logging.getLogger(__name__)

STATISTICS = ("max", "std", "entropy")
ABOVE, BELOW = "above_means_member", "below_means_member"
DEFAULT_PROBES = 1000
DEFAULT_T_PERCENT = 10.0


def default_attack_config(seed: int = 0) -> TrainConfig:
    """Attack model: one 64-unit hidden layer, softmax over {non-member, member}.

    Trained full-batch (the batch size exceeds any desk-scale attack set), which
    keeps the learned decision boundary free of mini-batch jitter.
    """
    return TrainConfig("mlp", epochs=2000, batch_size=10_000, learning_rate=0.5, hidden_units=64, seed=seed)


def feature_width(num_classes: int) -> int:
    return min(3, num_classes)


def extract_features(posteriors, k: int | None = None) -> np.ndarray:
    """Sort posteriors high-to-low and keep the first ``k`` (default min(3, c)).

    Accepts one PosteriorVector / 1-d array or a 2-d array of rows.
    """
    P = posteriors.probs if isinstance(posteriors, PosteriorVector) else np.asarray(posteriors, dtype=np.float64)
    single = P.ndim == 1
    P = np.atleast_2d(P)
    c = P.shape[1]
    k = feature_width(c) if k is None else k
    if not 1 <= k <= c:
        raise ValidationError(f"k must lie in [1, {c}], got {k}")
    order = np.argsort(-P, axis=1, kind="stable")
    F = np.take_along_axis(P, order, axis=1)[:, :k]
    return F[0] if single else F


def build_attack_training_set(shadow, dataset: Dataset, plan: SplitPlan, k: int | None = None):
    """Rows for shadow_train (label 1) then shadow_out (label 0)."""
    members, outs = plan["shadow_train"], plan["shadow_out"]
    idx = np.concatenate([members, outs])
    F = extract_features(shadow.predict_proba(dataset.features[idx]), k)
    y = np.concatenate([np.ones(members.size, np.int64), np.zeros(outs.size, np.int64)])
    return F, y


def train_attack_model(F: np.ndarray, y: np.ndarray, attack_cfg: TrainConfig):
    ds = Dataset(F, y, 2, FeatureSpaceSpec("unit_interval", F.shape[1]), name="attack")
    return learners.train(ds, None, attack_cfg)


@dataclass(frozen=True, eq=False)
class AttackOutcome:
    """Per-point results over the evaluation set (members first, then non-members)."""

    indices: np.ndarray
    truth: np.ndarray
    decisions: np.ndarray
    scores: np.ndarray
    queries: int
    k: int | None = None
    threshold: float | None = None

    def to_dict(self) -> dict:
        return {
            "indices": self.indices.tolist(),
            "truth": self.truth.tolist(),
            "decisions": self.decisions.tolist(),
            "scores": self.scores.tolist(),
            "queries": self.queries,
            "k": self.k,
            "threshold": self.threshold,
        }


def evaluation_set(plan: SplitPlan):
    members, outs = plan["target_train"], plan["target_out"]
    idx = np.concatenate([members, outs])
    truth = np.concatenate([np.ones(members.size, np.int64), np.zeros(outs.size, np.int64)])
    return idx, truth


def _check_target(target, dataset: Dataset):
    if target.input_dim != dataset.dim:
        raise ValidationError(
            f"target expects {target.input_dim} features but the evaluation data has {dataset.dim}"
        )


def _attack_with_rows(F, y, k, attack_cfg, target, target_dataset, target_plan) -> AttackOutcome:
    _check_target(target, target_dataset)
    attack = train_attack_model(F, y, attack_cfg)
    idx, truth = evaluation_set(target_plan)
    before = target.query_count
    posts = query_many(target, target_dataset.features[idx])
    spent = target.query_count - before
    scores = attack.predict_proba(extract_features(posts, k))[:, MembershipLabel.MEMBER]
    decisions = (scores >= 0.5).astype(np.int64)
    return AttackOutcome(idx, truth, decisions, scores, spent, k=k)


def _resolve_k(k, shadow_classes: int, target_classes: int) -> int:
    auto = min(feature_width(shadow_classes), feature_width(target_classes))
    if k is None:
        return auto
    if not 1 <= k <= min(shadow_classes, target_classes):
        raise ValidationError(f"k={k} exceeds the number of classes available")
    return int(k)


def _pooled_rows(shadows, k):
    rows = [build_attack_training_set(m, ds, plan, k) for m, ds, plan in shadows]
    return np.vstack([r[0] for r in rows]), np.concatenate([r[1] for r in rows])


def adversary2(
    shadow_dataset: Dataset,
    shadow_plan: SplitPlan,
    shadow_cfg: ModelRecipe,
    attack_cfg: TrainConfig,
    target_dataset: Dataset,
    target_plan: SplitPlan,
    target,
    k: int | None = None,
) -> AttackOutcome:
    """Data-transfer attack: the shadow is trained on ``shadow_dataset`` only.

    No target queries are spent before the evaluation queries.
    """
    k = _resolve_k(k, shadow_dataset.num_classes, target.num_classes)
    shadow = fit_model(shadow_cfg, shadow_dataset, shadow_plan["shadow_train"])
    F, y = build_attack_training_set(shadow, shadow_dataset, shadow_plan, k)
    return _attack_with_rows(F, y, k, attack_cfg, target, target_dataset, target_plan)


def adversary1(
    shadow_cfg: ModelRecipe,
    attack_cfg: TrainConfig,
    dataset: Dataset,
    plan: SplitPlan,
    target,
    k: int | None = None,
) -> AttackOutcome:
    """Single shadow model trained on ``plan['shadow_train']`` of the target's distribution."""
    return adversary2(dataset, plan, shadow_cfg, attack_cfg, dataset, plan, target, k)


def combining_attack(
    sub_cfgs: Sequence[ModelRecipe],
    attack_cfg: TrainConfig,
    dataset: Dataset,
    plan: SplitPlan,
    target,
    k: int | None = None,
) -> AttackOutcome:
    """Several sub-shadows of different kinds on the same shadow data; their rows are pooled."""
    if not sub_cfgs:
        raise ValidationError("combining attack needs at least one sub-shadow config")
    kinds = [getattr(c, "learner_kind", "stacked") for c in sub_cfgs]
    if len(set(kinds)) != len(kinds):
        warnings.warn(f"combining attack has repeated learner kinds: {kinds}", stacklevel=2)
    k = _resolve_k(k, dataset.num_classes, target.num_classes)
    shadows = [(fit_model(c, dataset, plan["shadow_train"]), dataset, plan) for c in sub_cfgs]
    F, y = _pooled_rows(shadows, k)
    return _attack_with_rows(F, y, k, attack_cfg, target, dataset, plan)


def shadow_slices(plan: SplitPlan, n: int) -> list[SplitPlan]:
    """Cut shadow_train and shadow_out into ``n`` disjoint slices, one plan per shadow."""
    if n < 1:
        raise ValidationError("need at least one shadow model")
    ins = np.array_split(plan["shadow_train"], n)
    outs = np.array_split(plan["shadow_out"], n)
    if any(a.size == 0 for a in ins) or any(b.size == 0 for b in outs):
        raise ValidationError(f"not enough shadow data for {n} shadow models")
    return [
        SplitPlan({"shadow_train": a, "shadow_out": b, "target_train": plan["target_train"],
                   "target_out": plan["target_out"]}, size=plan.size)
        for a, b in zip(ins, outs)
    ]


def multi_shadow_attack(
    shadow_cfg: ModelRecipe,
    attack_cfg: TrainConfig,
    dataset: Dataset,
    plan: SplitPlan,
    target,
    num_shadows: int,
    k: int | None = None,
) -> AttackOutcome:
    """Identical-config shadows on disjoint slices of the shadow data, rows pooled.

    With ``num_shadows == 1`` this is exactly :func:`adversary1`.
    """
    k = _resolve_k(k, dataset.num_classes, target.num_classes)
    shadows = []
    for i, sub in enumerate(shadow_slices(plan, num_shadows)):
        cfg = shadow_cfg if i == 0 else reseed(shadow_cfg, derive_seed(shadow_cfg.seed, i))
        shadows.append((fit_model(cfg, dataset, sub["shadow_train"]), dataset, sub))
    F, y = _pooled_rows(shadows, k)
    return _attack_with_rows(F, y, k, attack_cfg, target, dataset, plan)


# --- adversary 3 -----------------------------------------------------------


def statistics(P, kind: str) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if kind == "max":
        return P.max(axis=1)
    if kind == "std":
        return P.std(axis=1)
    if kind == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(P > 0, P * np.log(np.where(P > 0, P, 1.0)), 0.0)
        return -terms.sum(axis=1)
    raise ValidationError(f"statistic must be one of {STATISTICS}, got {kind!r}")


def statistic(posteriors, kind: str) -> float:
    """max, population std, or natural-log entropy (0 ln 0 = 0) of one posterior vector."""
    P = posteriors.probs if isinstance(posteriors, PosteriorVector) else posteriors
    return float(statistics(P, kind)[0])


def default_direction(kind: str) -> str:
    return BELOW if kind == "entropy" else ABOVE


@dataclass(frozen=True)
class ThresholdRule:
    statistic: str = "max"
    threshold: float = 0.5
    direction: str | None = None

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ValidationError(f"statistic must be one of {STATISTICS}")
        if not math.isfinite(self.threshold):
            raise ValidationError("threshold must be finite")
        if self.direction is None:
            object.__setattr__(self, "direction", default_direction(self.statistic))
        if self.direction not in (ABOVE, BELOW):
            raise ValidationError(f"direction must be {ABOVE!r} or {BELOW!r}")

    def decide(self, values: np.ndarray) -> np.ndarray:
        if self.direction == ABOVE:
            return (values >= self.threshold).astype(np.int64)
        return (values <= self.threshold).astype(np.int64)


def member_score(values: np.ndarray, rule: ThresholdRule) -> np.ndarray:
    """Orient a statistic so that larger always means 'more likely member'."""
    return values if rule.direction == ABOVE else -values


def generate_probes(space: FeatureSpaceSpec, n: int = DEFAULT_PROBES, seed: int = 0) -> np.ndarray:
    """Uniform pixels for unit_interval spaces, fair coin flips for binary ones."""
    if space.kind == "unbounded":
        raise ValidationError("cannot draw probes from an unbounded feature space")
    if n < 1:
        raise ValidationError("need at least one probe")
    rng = rng_for(seed)
    shape = (n, space.dimensionality)
    if space.kind == "binary":
        return rng.integers(0, 2, size=shape).astype(np.float64)
    return rng.random(shape)


def nearest_rank(values: np.ndarray, percentile: float) -> float:
    """Element at index ceil(n * p / 100) - 1 of the ascending sort (index 0 when that is negative)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValidationError("no values")
    pos = math.ceil(Fraction(v.size) * Fraction(percentile) / 100) - 1
    return float(v[min(max(pos, 0), v.size - 1)])


def choose_threshold(target, probes, t_percent: float = DEFAULT_T_PERCENT) -> ThresholdRule:
    """Top-t-percentile of the target's maximal posteriors on random probes."""
    probes = np.asarray(probes, dtype=np.float64)
    if probes.ndim != 2 or probes.shape[0] == 0:
        raise ValidationError("probes must be a non-empty list of feature vectors")
    if not 0 < t_percent < 100:
        raise ValidationError("t_percent must lie strictly between 0 and 100")
    maxima = statistics(query_many(target, probes), "max")
    return ThresholdRule("max", nearest_rank(maxima, 100 - t_percent), ABOVE)


def adversary3(target, rule: ThresholdRule, points) -> AttackOutcome:
    """One query per point; member iff the statistic clears the threshold. Truth is left empty."""
    X = np.asarray(points, dtype=np.float64)
    before = target.query_count
    values = statistics(query_many(target, X), rule.statistic)
    spent = target.query_count - before
    return AttackOutcome(
        np.arange(X.shape[0]),
        np.empty(0, np.int64),
        rule.decide(values),
        member_score(values, rule),
        spent,
        threshold=rule.threshold,
    )


def adversary3_on_plan(target, rule: ThresholdRule, dataset: Dataset, plan: SplitPlan) -> AttackOutcome:
    idx, truth = evaluation_set(plan)
    _check_target(target, dataset)
    out = adversary3(target, rule, dataset.features[idx])
    return AttackOutcome(idx, truth, out.decisions, out.scores, out.queries, threshold=rule.threshold)
