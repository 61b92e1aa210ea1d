"""Attack metrics and the overfitting diagnostic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import learners
from .core import Dataset, ValidationError, check_disjoint


@dataclass(frozen=True)
class PrecisionRecall:
    """Member is the positive class. Undefined ratios are reported as 0 and flagged."""

    precision: float
    recall: float
    precision_undefined: bool = False
    recall_undefined: bool = False

    def __iter__(self):
        yield self.precision
        yield self.recall


def _binary(a, name):
    a = np.asarray(a).astype(np.int64).reshape(-1)
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValidationError(f"{name} must contain only 0/1 membership labels")
    return a


def precision_recall(decisions, truth) -> PrecisionRecall:
    d = _binary(decisions, "decisions")
    t = _binary(truth, "truth")
    if d.size != t.size:
        raise ValidationError(f"length mismatch: {d.size} decisions vs {t.size} labels")
    if d.size == 0:
        raise ValidationError("no decisions to score")
    tp = int(np.sum((d == 1) & (t == 1)))
    fp = int(np.sum((d == 1) & (t == 0)))
    fn = int(np.sum((d == 0) & (t == 1)))
    p_undef, r_undef = tp + fp == 0, tp + fn == 0
    return PrecisionRecall(
        0.0 if p_undef else tp / (tp + fp),
        0.0 if r_undef else tp / (tp + fn),
        p_undef,
        r_undef,
    )


def auc(scores, truth) -> float:
    """Mann-Whitney AUC: P(member score > non-member score), ties counted half."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = _binary(truth, "truth")
    if s.size != t.size:
        raise ValidationError("scores and truth differ in length")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both members and non-members")
    ranks = rankdata(s)  # average ranks for ties
    u = ranks[t == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def overfitting_level(model, dataset: Dataset, train_part, test_part) -> float:
    """Training accuracy minus test accuracy."""
    check_disjoint(train_part, test_part)
    return learners.accuracy(model, dataset, train_part) - learners.accuracy(model, dataset, test_part)


def spearman(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)
