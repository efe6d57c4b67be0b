"""Seeded minibatch training with AdaGrad/Adam and cross-entropy loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..metrics import macro_f1
from .model import ModelGraph, backward_from_logits, forward, predict_matrix


class TrainingError(RuntimeError):
    """Training diverged or was misconfigured."""


@dataclass
class TrainConfig:
    optimizer: str = "adagrad"
    learning_rate: float = 0.05
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.optimizer not in ("adagrad", "adam"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise TrainingError("learning rate must be non-negative")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise TrainingError("clip_norm must be positive when set")


class AdaGrad:
    def __init__(self, learning_rate, eps=1e-8):
        self.lr = learning_rate
        self.eps = eps
        self.accum = None

    def step(self, params, grads):
        if self.accum is None:
            self.accum = [np.zeros_like(p) for p in params]
        for p, g, a in zip(params, grads, self.accum):
            a += g * g
            p -= self.lr * g / (np.sqrt(a) + self.eps)


class Adam:
    def __init__(self, learning_rate, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def _make_optimizer(config: TrainConfig):
    if config.optimizer == "adagrad":
        return AdaGrad(config.learning_rate)
    return Adam(config.learning_rate)


def _flat_params(model: ModelGraph):
    """Stable (layer index, key) ordering over all parameter arrays."""
    slots = []
    for i, layer in enumerate(model.layers):
        for key in sorted(layer.weights):
            slots.append((i, key))
    return slots


def train(
    model: ModelGraph,
    X,
    y,
    config: TrainConfig,
    X_val=None,
    y_val=None,
) -> list[dict]:
    """Train in place; returns per-epoch history dicts.

    ``X`` rows are encoded inputs (token ids or feature vectors). The
    run is bitwise deterministic for a fixed seed and data order.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise TrainingError("X and y row counts differ")
    if y.size and (y.min() < 0 or y.max() >= model.num_classes):
        raise TrainingError("label outside [0, K)")
    n = X.shape[0]
    if n == 0:
        raise TrainingError("empty training set")

    slots = _flat_params(model)
    params = [model.layers[i].weights[k] for i, k in slots]
    optimizer = _make_optimizer(config)
    rng = np.random.default_rng(config.seed)
    history = []

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_acc = [np.zeros_like(p) for p in params]
            for idx in batch:
                probs, trace = forward(
                    model, X[idx], mode="train", trace=True, rng=rng
                )
                p_true = probs[y[idx]]
                epoch_loss += -np.log(p_true) if p_true > 0 else np.inf
                dlogits = probs.copy()
                dlogits[y[idx]] -= 1.0
                _, grads = backward_from_logits(model, trace, dlogits)
                for s, (i, k) in enumerate(slots):
                    g = grads[i].get(k)
                    if g is not None:
                        grad_acc[s] += g
            scale = 1.0 / len(batch)
            for g in grad_acc:
                g *= scale
            if config.clip_norm is not None:
                total = np.sqrt(sum(float((g * g).sum()) for g in grad_acc))
                if total > config.clip_norm:
                    clip_scale = config.clip_norm / total
                    for g in grad_acc:
                        g *= clip_scale
            optimizer.step(params, grad_acc)
        mean_loss = epoch_loss / n
        if not np.isfinite(mean_loss):
            raise TrainingError(f"loss diverged at epoch {epoch}")
        model.check_finite()
        entry = {
            "epoch": epoch,
            "loss": float(mean_loss),
            "macro_f1": macro_f1(y, predict_matrix(model, X), model.num_classes),
        }
        if X_val is not None:
            entry["val_macro_f1"] = macro_f1(
                y_val, predict_matrix(model, X_val), model.num_classes
            )
        history.append(entry)
    return history
