"""End-to-end acceptance criteria, one test per criterion.

Each test prints and records a single PASS/FAIL line; the lines are
repeated in the terminal summary. Tolerances are the stated ones.
"""

import itertools
import json
import time
import urllib.request

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mileaks import learners
from mileaks.blackbox import BlackBoxModel, serve
from mileaks.core import rng_for
from mileaks.datasets import kmeans, within_cluster_error
from mileaks.experiment import AdversarySpec, DefenseSpec, run_experiment, sweep
from mileaks.learners.neural import NeuralNet, flatten, init_layers
from mileaks.metrics import auc, spearman
from mileaks.scenarios import (
    generalizing_spec,
    overfit_spec,
    stacking_baseline_spec,
    stacking_spec,
    transfer_adversary,
)


def verdict(number, name, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {name} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def overfit_adv1():
    return run_experiment(overfit_spec())


# --- independent oracles -------------------------------------------------------

def pairwise_auc(scores, truth):
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def best_partition_error(X, k):
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(X)):
        if len(set(labels)) != k:
            continue
        labels = np.array(labels)
        err = sum(((X[labels == j] - X[labels == j].mean(0)) ** 2).sum() for j in range(k))
        best = min(best, err)
    return best


def fd_gradient(model, X, y, step=1e-5):
    vec = flatten(model.layers)
    out = np.empty_like(vec)
    for i in range(vec.size):
        hi, lo = vec.copy(), vec.copy()
        hi[i] += step
        lo[i] -= step
        out[i] = (learners.model_loss(learners.with_params(model, hi), X, y)
                  - learners.model_loss(learners.with_params(model, lo), X, y)) / (2 * step)
    return out


def test_1_oracle_exactness():
    start = time.perf_counter()
    rng = rng_for(2024)
    auc_ok = 0
    for _ in range(200):
        n = int(rng.integers(2, 51))
        truth = rng.integers(0, 2, n)
        truth[:2] = [0, 1]
        scores = rng.integers(0, 6, n).astype(float)  # coarse scores force ties
        auc_ok += auc(scores, truth) == pairwise_auc(scores, truth)

    km_ok, km_total = 0, 0
    for _ in range(40):
        n = int(rng.integers(3, 9))
        k = int(rng.integers(1, min(3, n) + 1))
        X = rng.normal(size=(n, 2)).round(1)
        labels = kmeans(X, k, seed=0)
        km_total += 1
        km_ok += np.isclose(within_cluster_error(X, labels), best_partition_error(X, k), rtol=1e-12, atol=1e-12)

    grad_ok = 0
    for i in range(20):
        kind = "mlp" if i % 2 else "logistic"
        d, c = int(rng.integers(2, 6)), int(rng.integers(2, 5))
        widths = [d, int(rng.integers(2, 6)), c] if kind == "mlp" else [d, c]
        layers = [(W, rng.normal(scale=0.1, size=b.shape)) for W, b in init_layers(widths, rng)]
        model = NeuralNet(kind, layers)
        X, y = rng.normal(size=(8, d)), rng.integers(0, c, 8)
        g, fd = learners.loss_gradient(model, X, y), fd_gradient(model, X, y)
        rel = np.max(np.abs(g - fd) / np.maximum(1e-8, np.abs(g) + np.abs(fd)))
        grad_ok += rel <= 1e-4
    elapsed = time.perf_counter() - start
    ok = auc_ok == 200 and km_ok == km_total and grad_ok == 20 and elapsed < 10
    verdict(1, "oracle exactness", ok,
            f"auc {auc_ok}/200, kmeans {km_ok}/{km_total}, gradients {grad_ok}/20, {elapsed:.1f}s")


def test_2_attack_lift_under_overfitting():
    t0 = time.perf_counter()
    over = run_experiment(overfit_spec())
    t1 = time.perf_counter()
    gen = run_experiment(generalizing_spec())
    t2 = time.perf_counter()
    ok = (over.precision >= 0.65 and over.recall >= 0.65
          and 0.40 <= gen.precision <= 0.60 and 0.40 <= gen.recall <= 0.60
          and t1 - t0 < 60 and t2 - t1 < 60)
    verdict(2, "attack lift under overfitting", ok,
            f"OVERFIT P={over.precision:.3f} R={over.recall:.3f} in {t1 - t0:.0f}s; "
            f"GENERALIZING P={gen.precision:.3f} R={gen.recall:.3f} in {t2 - t1:.0f}s")


def test_3_epoch_monotonicity():
    epochs = [10, 30, 100, 300]
    reports = sweep(overfit_spec(), "epochs", epochs)
    precisions = [r.precision for r in reports]
    rho = spearman(epochs, precisions)
    verdict(3, "epoch monotonicity", rho > 0, f"precisions {np.round(precisions, 3).tolist()}, rho={rho:.3f}")


def test_4_shadow_count_insensitivity():
    one, five = sweep(overfit_spec(), "num_shadow_models", [1, 5])
    dp, dr = abs(one.precision - five.precision), abs(one.recall - five.recall)
    verdict(4, "shadow-count insensitivity", dp <= 0.05 and dr <= 0.05, f"|dP|={dp:.3f} |dR|={dr:.3f}")


def test_5_transfer_attack(overfit_adv1):
    r = run_experiment(overfit_spec(transfer_adversary()))
    gap = abs(r.precision - overfit_adv1.precision)
    verdict(5, "transfer attack", r.precision >= 0.60 and gap <= 0.15,
            f"adversary2 P={r.precision:.3f}, adversary1 P={overfit_adv1.precision:.3f}, gap {gap:.3f}")


def test_6_adversary3_screening():
    # a fixed threshold leaves the ranking, hence the AUC, untouched
    aucs = {s: run_experiment(overfit_spec(AdversarySpec("3", statistic=s, threshold=0.5))).auc
            for s in ("max", "std", "entropy")}
    spread = max(aucs.values()) - min(aucs.values())
    verdict(6, "adversary3 screening", aucs["max"] >= 0.80 and spread <= 0.05,
            ", ".join(f"{s} {v:.4f}" for s, v in aucs.items()) + f", spread {spread:.4f}")


def test_7_threshold_method():
    r = run_experiment(overfit_spec(AdversarySpec("3", n_probes=1000, t_percent=10)))
    n_eval = len(r.manifest["outcome"]["decisions"])
    ok = r.precision >= 0.60 and r.recall >= 0.60 and r.query_cost == 1000 + n_eval
    verdict(7, "threshold method", ok,
            f"P={r.precision:.3f} R={r.recall:.3f} queries {r.query_cost} = 1000 + {n_eval}")


def test_8_dropout_defense(overfit_adv1):
    d = run_experiment(overfit_spec(defense=DefenseSpec("dropout", 0.5, 0.5)))
    drop = overfit_adv1.precision - d.precision
    acc_drop = overfit_adv1.target_test_accuracy - d.target_test_accuracy
    verdict(8, "dropout defense", drop >= 0.15 and acc_drop <= 0.05,
            f"precision {overfit_adv1.precision:.3f} -> {d.precision:.3f}, "
            f"test accuracy {overfit_adv1.target_test_accuracy:.3f} -> {d.target_test_accuracy:.3f}")


def test_9_stacking_defense():
    base = run_experiment(stacking_baseline_spec())
    stacked = run_experiment(stacking_spec())
    drop = base.precision - stacked.precision
    verdict(9, "stacking defense", drop >= 0.15,
            f"undefended P={base.precision:.3f}, stacked P={stacked.precision:.3f}, drop {drop:.3f}")


def test_10_overfitting_defense_correlation(overfit_adv1):
    grid = [(a, b) for a in (0, 0.25, 0.5, 0.75) for b in (0, 0.25, 0.5, 0.75)]
    reports = sweep(overfit_spec(), "dropout_grid", grid)
    of_red = [overfit_adv1.overfitting_level - r.overfitting_level for r in reports]
    p_red = [overfit_adv1.precision - r.precision for r in reports]
    rho = spearman(of_red, p_red)
    verdict(10, "overfitting-defense correlation", rho > 0, f"rho={rho:.3f} over {len(grid)} grid points")


def test_11_black_box_fidelity(tmp_path, overfit_adv1):
    model_path = tmp_path / "target.json"
    local = run_experiment(overfit_spec(), model_out=str(model_path))
    box = BlackBoxModel(learners.load_model(model_path))
    with serve(box) as server:
        remote = run_experiment(overfit_spec().replace(target_address=server.address))
        with urllib.request.urlopen(f"http://{server.address}/stats", timeout=5) as resp:
            served = json.loads(resp.read())["queries"]
    expected = len(local.manifest["outcome"]["decisions"])
    same = remote.manifest["outcome"]["decisions"] == local.manifest["outcome"]["decisions"]
    ok = same and served == expected and local.precision == overfit_adv1.precision
    verdict(11, "black-box fidelity", ok,
            f"decisions identical: {same}, /stats {served} vs closed form {expected}")


def test_12_combining_attack(overfit_adv1):
    r = run_experiment(overfit_spec(AdversarySpec("combining")))
    gap = abs(r.precision - overfit_adv1.precision)
    verdict(12, "combining attack", gap <= 0.10,
            f"combining P={r.precision:.3f}, adversary1 P={overfit_adv1.precision:.3f}, gap {gap:.3f}")
