"""Dense softmax networks trained with plain mini-batch SGD.

Multinomial logistic regression is the zero-hidden-layer case of the same
network, so both learners share the forward/backward code below.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import TrainConfig, ValidationError, rng_for


class TrainingDivergence(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} after epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return p / p.sum(axis=1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def init_layers(widths: list[int], rng: np.random.Generator | None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Uniform(+-1/sqrt(fan_in)) weights and zero biases; zeros when ``rng`` is None."""
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        if rng is None:
            W = np.zeros((fan_in, fan_out))
        else:
            bound = 1.0 / math.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((W, np.zeros(fan_out)))
    return layers


def forward(layers, X, masks=None):
    """Return (logits, cache). ``masks[i]`` scales the input of layer i (already divided by keep)."""
    acts = []
    a = X
    for i, (W, b) in enumerate(layers):
        if masks is not None and masks[i] is not None:
            a = a * masks[i]
        acts.append(a)
        z = a @ W + b
        if i < len(layers) - 1:
            a = np.maximum(z, 0.0)
        else:
            a = z
    return a, acts


def loss_and_gradient(layers, X, y, l2_lambda=0.0, masks=None):
    """Mean cross-entropy plus (l2/2)*sum(W**2), and its gradient per layer."""
    n = X.shape[0]
    logits, acts = forward(layers, X, masks)
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), y].mean()
    loss += 0.5 * l2_lambda * sum(float(np.sum(W * W)) for W, _ in layers)

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        a_in = acts[i]
        gW = a_in.T @ delta + l2_lambda * W
        gb = delta.sum(axis=0)
        grads[i] = (gW, gb)
        if i > 0:
            delta = delta @ W.T
            # acts[i] is relu output times mask; zero exactly where relu was inactive
            delta = delta * (a_in > 0)
            if masks is not None and masks[i] is not None:
                delta = delta * masks[i]
    return loss, grads


def flatten(layers) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


def unflatten(vec: np.ndarray, widths: list[int]):
    layers, pos = [], 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        W = vec[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = vec[pos : pos + fan_out]
        pos += fan_out
        layers.append((W, b))
    return layers


class NeuralNet:
    """Trained dense network; immutable once built."""

    def __init__(self, kind: str, layers):
        if kind not in ("logistic", "mlp"):
            raise ValidationError(f"not a neural learner kind: {kind!r}")
        if kind == "mlp" and len(layers) < 2:
            raise ValidationError("an mlp needs at least one hidden layer")
        if kind == "logistic" and len(layers) != 1:
            raise ValidationError("logistic regression has exactly one layer")
        frozen = []
        for W, b in layers:
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            W.setflags(write=False)
            b.setflags(write=False)
            frozen.append((W, b))
        self.kind = kind
        self._layers = tuple(frozen)

    @property
    def layers(self):
        return self._layers

    @property
    def widths(self) -> list[int]:
        return [self._layers[0][0].shape[0]] + [W.shape[1] for W, _ in self._layers]

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def num_classes(self) -> int:
        return self.widths[-1]

    @classmethod
    def zeros(cls, kind: str, widths: list[int]) -> "NeuralNet":
        return cls(kind, init_layers(widths, None))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        logits, _ = forward(self._layers, np.asarray(X, dtype=np.float64))
        return softmax(logits)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "widths": self.widths,
            "params": flatten(self._layers).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralNet":
        widths = [int(w) for w in d["widths"]]
        vec = np.asarray(d["params"], dtype=np.float64)
        expected = sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))
        if vec.size != expected:
            raise ValidationError(f"expected {expected} parameters, found {vec.size}")
        return cls(d["kind"], unflatten(vec, widths))


def _dropout_mask(rng, shape, ratio):
    keep = 1.0 - ratio
    return (rng.random(shape) < keep) / keep


def fit_network(X: np.ndarray, y: np.ndarray, num_classes: int, cfg: TrainConfig) -> NeuralNet:
    rng = rng_for(cfg.seed)
    d = X.shape[1]
    if cfg.learner_kind == "mlp":
        widths = [d, cfg.hidden_units, num_classes]
        layers = [(W.copy(), b.copy()) for W, b in init_layers(widths, rng)]
    else:
        widths = [d, num_classes]
        layers = init_layers(widths, None)

    n = X.shape[0]
    ratios = [cfg.dropout_input] + [cfg.dropout_hidden] * (len(widths) - 2)
    use_dropout = any(r > 0 for r in ratios)
    lr = cfg.learning_rate
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = X[idx], y[idx]
            masks = None
            if use_dropout:
                masks = [
                    _dropout_mask(rng, (len(idx), widths[i]), r) if r > 0 else None
                    for i, r in enumerate(ratios)
                ]
            loss, grads = loss_and_gradient(layers, xb, yb, cfg.l2_lambda, masks)
            total += loss * len(idx)
            for (W, b), (gW, gb) in zip(layers, grads):
                W -= lr * gW
                b -= lr * gb
        mean_loss = total / n
        if not math.isfinite(mean_loss) or not all(np.isfinite(W).all() for W, _ in layers):
            raise TrainingDivergence(epoch, mean_loss)
    return NeuralNet(cfg.learner_kind, layers)
