import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mileaks.core import Dataset, FeatureSpaceSpec, ValidationError
from mileaks.learners import NeuralNet, RandomForest, Tree
from mileaks.metrics import auc, overfitting_level, precision_recall


def brute_auc(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t == 1]
    neg = [s for s, t in zip(scores, truth) if t == 0]
    total = 0.0
    for a, b in itertools.product(pos, neg):
        total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))


def test_precision_recall_examples():
    assert tuple(precision_recall([1, 0, 1, 0], [1, 0, 1, 0])) == (1.0, 1.0)
    assert tuple(precision_recall([1, 1, 1, 1], [1, 1, 0, 0])) == (0.5, 1.0)
    pr = precision_recall([1, 1, 1, 0], [1, 1, 0, 1])
    assert pr.precision == pytest.approx(2 / 3) and pr.recall == pytest.approx(2 / 3)


def test_precision_undefined_is_flagged():
    pr = precision_recall([0, 0], [1, 0])
    assert pr.precision == 0.0 and pr.precision_undefined
    assert not pr.recall_undefined
    pr = precision_recall([1, 0], [0, 0])
    assert pr.recall == 0.0 and pr.recall_undefined


@pytest.mark.parametrize("d,t", [([1], [1, 0]), ([], [])])
def test_precision_recall_errors(d, t):
    with pytest.raises(ValidationError):
        precision_recall(d, t)


def test_precision_equals_recall_on_symmetric_balanced_case():
    truth = [1, 1, 1, 0, 0, 0]
    dec = [1, 1, 0, 1, 0, 0]
    p, r = precision_recall(dec, truth)
    assert p == r


def test_auc_examples():
    assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
    assert auc([0.9, 0.4, 0.6, 0.1], [1, 1, 0, 0]) == 0.75


def test_auc_needs_both_classes():
    with pytest.raises(ValidationError):
        auc([0.1, 0.2], [1, 1])


@given(
    st.lists(st.tuples(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.9, 1.0]) | st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=50)
)
@settings(max_examples=200)
def test_auc_matches_pairwise_oracle(pairs):
    scores = [p[0] for p in pairs]
    truth = [p[1] for p in pairs]
    if len(set(truth)) < 2:
        return
    assert auc(scores, truth) == brute_auc(scores, truth)


def _ds(X, y, c):
    X = np.asarray(X, float)
    return Dataset(X, np.asarray(y), c, FeatureSpaceSpec("unbounded", X.shape[1]))


def test_overfitting_level_memorizer_on_random_labels():
    # a 1-nn style memorizer: one pure leaf per training point
    rng = np.random.default_rng(0)
    n = 500
    X = rng.random((2 * n, 1))
    y = rng.integers(0, 2, 2 * n)
    ds = _ds(X, y, 2)
    train_idx, test_idx = np.arange(n), np.arange(n, 2 * n)
    order = train_idx[np.argsort(X[train_idx, 0])]
    xs = X[order, 0]
    thresholds = (xs[:-1] + xs[1:]) / 2
    # build a degenerate tree as a right-leaning chain
    feature, threshold, left, right, value = [], [], [], [], []
    for i, thr in enumerate(thresholds):
        node = len(feature)
        feature.append(0); threshold.append(thr); left.append(node + 1); right.append(node + 2)
        value.append(np.zeros(2))
        feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
        value.append(np.eye(2)[y[order[i]]])
    feature.append(-1); threshold.append(0.0); left.append(-1); right.append(-1)
    value.append(np.eye(2)[y[order[-1]]])
    tree = Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))
    model = RandomForest([tree], 1, 2)
    level = overfitting_level(model, ds, train_idx, test_idx)
    assert level == pytest.approx(0.5, abs=0.1)


def test_overfitting_level_constant_model_near_zero():
    rng = np.random.default_rng(1)
    X = rng.random((1000, 3))
    y = rng.integers(0, 2, 1000)
    ds = _ds(X, y, 2)
    model = NeuralNet.zeros("logistic", [3, 2])
    level = overfitting_level(model, ds, np.arange(500), np.arange(500, 1000))
    assert abs(level) <= 0.1
    assert -1 <= level <= 1


def test_overfitting_level_rejects_overlap():
    ds = _ds(np.zeros((4, 1)), [0, 1, 0, 1], 2)
    with pytest.raises(ValidationError):
        overfitting_level(NeuralNet.zeros("logistic", [1, 2]), ds, [0, 1], [1, 2])
