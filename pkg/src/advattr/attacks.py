"""Untargeted L-infinity gradient-sign attacks on the general classifier."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .numeric import DimensionError, MLPParams, grad_input, predict


@dataclass(frozen=True)
class AttackConfig:
    """Budget and step schedule for FGSM/IFGSM/PGD.

    ``alpha=None`` resolves to ``2.5 * epsilon / steps``.
    """

    epsilon: float = 0.06
    alpha: float | None = None
    steps: int = 10
    random_start: bool = False
    clamp_lo: float = 0.0
    clamp_hi: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not self.clamp_lo < self.clamp_hi:
            raise ValueError("clamp_lo must be below clamp_hi")

    @property
    def step_size(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return 2.5 * self.epsilon / self.steps if self.steps else 0.0

    def with_epsilon(self, epsilon: float) -> "AttackConfig":
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class AdversarialResult:
    """Attack output; array-valued fields are per row when a batch was attacked.

    ``success`` is ``pred_adv != y_true``; ``flip`` additionally requires
    the clean input to have been classified correctly.
    """

    x_hat: np.ndarray
    linf: np.ndarray | float
    pred_clean: np.ndarray | int
    pred_adv: np.ndarray | int
    success: np.ndarray | bool
    flip: np.ndarray | bool


def sign_vec(v) -> np.ndarray:
    # np.sign maps 0 to 0, which leaves flat coordinates untouched
    return np.sign(np.asarray(v, dtype=np.float64))


def linf_dist(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.shape[-1] == 0:
        return 0.0 if a.ndim == 1 else np.zeros(a.shape[0])
    d = np.max(np.abs(a - b), axis=-1)
    return float(d) if a.ndim == 1 else d


def project_ball(x_hat, x, cfg: AttackConfig) -> np.ndarray:
    """Clamp into the epsilon-ball around ``x`` intersected with the valid range."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise DimensionError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    lo = np.maximum(x - cfg.epsilon, cfg.clamp_lo)
    hi = np.minimum(x + cfg.epsilon, cfg.clamp_hi)
    return np.minimum(np.maximum(x_hat, lo), hi)


def _check(model: MLPParams, x, y_true):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != model.input_dim:
        raise DimensionError(
            f"input of shape {x.shape} does not match input_dim {model.input_dim}"
        )
    y = np.asarray(y_true)
    if x.ndim == 2 and y.shape != (x.shape[0],):
        raise DimensionError(f"expected {x.shape[0]} labels, got shape {y.shape}")
    return x, y


def _iterate(model: MLPParams, x, x0, y, cfg: AttackConfig) -> np.ndarray:
    x_hat = x0
    step = cfg.step_size
    for _ in range(cfg.steps):
        g = grad_input(model, x_hat, y)
        x_hat = project_ball(x_hat + step * sign_vec(g), x, cfg)
    return x_hat


def _result(model: MLPParams, x, x_hat, y) -> AdversarialResult:
    pred_clean = predict(model, x)
    pred_adv = predict(model, x_hat)
    success = pred_adv != y
    flip = success & (pred_clean == y)
    if x.ndim == 1:
        return AdversarialResult(
            x_hat, linf_dist(x, x_hat), int(pred_clean), int(pred_adv), bool(success), bool(flip)
        )
    return AdversarialResult(x_hat, linf_dist(x, x_hat), pred_clean, pred_adv, success, flip)


def fgsm(model: MLPParams, x, y_true, cfg: AttackConfig) -> AdversarialResult:
    """Single full-budget step: IFGSM with one step of size epsilon."""
    return ifgsm(model, x, y_true, replace(cfg, steps=1, alpha=cfg.epsilon or None))


def ifgsm(model: MLPParams, x, y_true, cfg: AttackConfig) -> AdversarialResult:
    if cfg.random_start:
        raise ValueError("ifgsm starts from the clean input; use pgd for a random start")
    x, y = _check(model, x, y_true)
    x_hat = _iterate(model, x, x.copy(), y, cfg)
    return _result(model, x, x_hat, y)


def pgd_start(x: np.ndarray, cfg: AttackConfig, sample_ids: Sequence[int] | None = None,
              stream: int = 0) -> np.ndarray:
    """Uniform random start in the epsilon-ball, projected into range.

    Each row draws from its own Philox stream keyed by (seed, stream, sample id),
    so a sample's start does not depend on which batch it was attacked in.
    """
    x = np.asarray(x, dtype=np.float64)
    rows = x.reshape(-1, x.shape[-1])
    if sample_ids is None:
        sample_ids = range(rows.shape[0])
    sample_ids = list(sample_ids)
    if len(sample_ids) != rows.shape[0]:
        raise DimensionError(f"{len(sample_ids)} sample ids for {rows.shape[0]} inputs")
    u = np.empty_like(rows)
    for r, sid in enumerate(sample_ids):
        seq = np.random.SeedSequence([cfg.seed, stream, int(sid)])
        rng = np.random.Generator(np.random.Philox(seq))
        u[r] = rng.uniform(-cfg.epsilon, cfg.epsilon, size=rows.shape[1])
    return project_ball(x + u.reshape(x.shape), x, cfg)


def pgd(model: MLPParams, x, y_true, cfg: AttackConfig,
        sample_ids: Sequence[int] | None = None, stream: int = 0) -> AdversarialResult:
    """IFGSM iterations from a seeded random start (Madry-style PGD)."""
    x, y = _check(model, x, y_true)
    if x.ndim == 1 and sample_ids is None:
        sample_ids = [0]
    x_hat = _iterate(model, x, pgd_start(x, cfg, sample_ids, stream), y, cfg)
    return _result(model, x, x_hat, y)


def attack(model: MLPParams, x, y_true, cfg: AttackConfig, **kwargs) -> AdversarialResult:
    return pgd(model, x, y_true, cfg, **kwargs) if cfg.random_start else ifgsm(model, x, y_true, cfg)
