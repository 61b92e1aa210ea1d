"""The two standard synthetic scenarios used by the acceptance suite and scripts.

OVERFIT: 400 gaussian-blob points, c = 10, d = 16, a 128-unit mlp trained 300
epochs without regularization. GENERALIZING: the same generator with 2000
points, 30 epochs and l2_lambda = 1e-3.
"""

from __future__ import annotations

from .core import TrainConfig
from .datasets import SyntheticSpec
from .experiment import AdversarySpec, DatasetSource, DefenseSpec, ExperimentSpec

NUM_CLASSES = 10
DIM = 16
CLASS_SEPARATION = 0.5
NOISE = 0.6
DATA_SEED = 1
TARGET_LR = 0.2


def blobs(num_points: int, seed: int = DATA_SEED) -> SyntheticSpec:
    return SyntheticSpec(
        kind="gaussian_blobs",
        num_points=num_points,
        num_classes=NUM_CLASSES,
        dimensionality=DIM,
        class_separation=CLASS_SEPARATION,
        noise=NOISE,
        seed=seed,
    )


def hypercube(num_points: int = 400, seed: int = 5) -> SyntheticSpec:
    return SyntheticSpec(
        kind="binary_hypercube",
        num_points=num_points,
        num_classes=NUM_CLASSES,
        dimensionality=DIM,
        noise=0.2,
        seed=seed,
    )


def overfit_target() -> TrainConfig:
    return TrainConfig("mlp", epochs=300, batch_size=10, learning_rate=TARGET_LR, hidden_units=128)


def generalizing_target() -> TrainConfig:
    return overfit_target().replace(epochs=30, l2_lambda=1e-3)


def overfit_spec(adversary: AdversarySpec | None = None, defense: DefenseSpec | None = None, seed: int = 0) -> ExperimentSpec:
    return ExperimentSpec(
        dataset=DatasetSource(synthetic=blobs(400)),
        target=overfit_target(),
        defense=defense or DefenseSpec(),
        adversary=adversary or AdversarySpec(),
        seed=seed,
    )


def generalizing_spec(adversary: AdversarySpec | None = None, seed: int = 0) -> ExperimentSpec:
    return ExperimentSpec(
        dataset=DatasetSource(synthetic=blobs(2000)),
        target=generalizing_target(),
        adversary=adversary or AdversarySpec(),
        seed=seed,
    )


def transfer_adversary() -> AdversarySpec:
    """Adversary 2 with an overfit binary-hypercube shadow world."""
    return AdversarySpec("2", shadow=overfit_target(), shadow_dataset=DatasetSource(synthetic=hypercube()))


def stacking_baseline_spec(seed: int = 0) -> ExperimentSpec:
    """Undefended mlp on the pooled stacking target-train parts, attacked on the stacking split."""
    return overfit_spec(seed=seed).replace(split_kind="stacking")


def stacking_spec(seed: int = 0) -> ExperimentSpec:
    return overfit_spec(defense=DefenseSpec("stacking"), seed=seed)
