"""Mini-batch SGD for the general classifier, standard and adversarial."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attacks import AttackConfig, pgd
from .numeric import DimensionError, MLPParams, cross_entropy, grad_params, init_mlp, logits


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 40
    batch_size: int = 32
    seed: int = 0
    # weight of the clean term in the mixed adversarial objective
    mix_alpha: float = 0.5
    attack: AttackConfig = field(
        default_factory=lambda: AttackConfig(epsilon=0.06, steps=7, random_start=True)
    )

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not 0.0 <= self.mix_alpha <= 1.0:
            raise ValueError(f"mix_alpha must lie in [0, 1], got {self.mix_alpha}")


def _check_data(data, shape: Sequence[int]):
    x, y = data
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training needs a non-empty 2-D input array")
    if y.shape != (x.shape[0],):
        raise DimensionError(f"expected {x.shape[0]} labels, got shape {y.shape}")
    if shape[0] != x.shape[1]:
        raise DimensionError(f"model input {shape[0]} does not match data width {x.shape[1]}")
    return x, y


def adv_loss(model: MLPParams, x, y_true, cfg: TrainConfig, sample_ids=None, stream=0):
    """Mixed objective ``a * L(x, y) + (1 - a) * L(x_hat, y)`` with a PGD ``x_hat``.

    The adversarial term is scored against the true label. Returns a float for
    a single input and a per-row array for a batch.
    """
    clean = cross_entropy(logits(model, x), y_true)
    x_hat = pgd(model, x, y_true, cfg.attack, sample_ids=sample_ids, stream=stream).x_hat
    adv = cross_entropy(logits(model, x_hat), y_true)
    return cfg.mix_alpha * clean + (1.0 - cfg.mix_alpha) * adv


def mixed_grad(model: MLPParams, x, x_hat, y, mix_alpha: float):
    """Batch-mean parameter gradient of the mixed objective with ``x_hat`` held fixed."""
    if mix_alpha == 1.0:
        return grad_params(model, x, y)
    if mix_alpha == 0.0:
        return grad_params(model, x_hat, y)
    g_clean = grad_params(model, x, y)
    g_adv = grad_params(model, x_hat, y)
    return [
        (mix_alpha * cw + (1.0 - mix_alpha) * aw, mix_alpha * cb + (1.0 - mix_alpha) * ab)
        for (cw, cb), (aw, ab) in zip(g_clean, g_adv)
    ]


def _sgd(model: MLPParams, grads, lr: float) -> MLPParams:
    return model.with_params([(w - lr * dw, b - lr * db)
                              for (w, b), (dw, db) in zip(model.params(), grads)])


def _fit(data, shape, cfg: TrainConfig, adversarial: bool) -> MLPParams:
    x, y = _check_data(data, shape)
    model = init_mlp(shape, cfg.seed)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 1])))
    # a zero budget or a pure clean objective make x_hat irrelevant; take the
    # clean path so the update sequence matches standard training bit for bit
    use_attack = adversarial and cfg.mix_alpha < 1.0 and cfg.attack.epsilon > 0
    attack_cfg = cfg.attack
    n = x.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            if use_attack:
                x_hat = pgd(model, xb, yb, attack_cfg, sample_ids=idx, stream=epoch).x_hat
                grads = mixed_grad(model, xb, x_hat, yb, cfg.mix_alpha)
            else:
                grads = grad_params(model, xb, yb)
            model = _sgd(model, grads, cfg.learning_rate)
    return model


def train_standard(data, shape: Sequence[int], cfg: TrainConfig) -> MLPParams:
    """Plain SGD on cross-entropy. ``data`` is an ``(inputs, labels)`` pair."""
    return _fit(data, shape, cfg, adversarial=False)


def train_adversarial(data, shape: Sequence[int], cfg: TrainConfig) -> MLPParams:
    """SGD on the mixed clean/adversarial objective.

    Adversarial examples are regenerated with PGD against the current
    parameters for every batch. PGD random starts are keyed by (epoch,
    dataset index), independent of the shuffle stream.
    """
    return _fit(data, shape, cfg, adversarial=True)


def dataset_loss(model: MLPParams, x, y) -> float:
    return float(np.mean(cross_entropy(logits(model, x), np.asarray(y))))
