"""Structured joint embedding between image features and class attributes.

A bilinear compatibility ``theta^T W phi(y)`` is trained with a margin ranking
loss using max-violator SGD; attributes are predicted as ``theta W`` and an
image is assigned to the class whose attribute vector is nearest.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .numeric import DimensionError

DECISION_RULES = ("euclidean", "dot")


@dataclass(frozen=True)
class AttributeMatrix:
    """Per-class ground-truth attribute strengths, one row per class."""

    values: np.ndarray
    vocabulary: tuple[str, ...] | None = None
    class_ids: tuple[int, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 2:
            raise DimensionError(f"need a C x m matrix with C >= 2, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("attribute matrix must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.vocabulary is not None:
            vocab = tuple(self.vocabulary)
            if len(vocab) != v.shape[1]:
                raise DimensionError(
                    f"vocabulary has {len(vocab)} phrases for {v.shape[1]} attributes"
                )
            object.__setattr__(self, "vocabulary", vocab)
        ids = tuple(range(v.shape[0])) if self.class_ids is None else tuple(self.class_ids)
        if len(ids) != v.shape[0]:
            raise DimensionError("class_ids length must equal the class count")
        object.__setattr__(self, "class_ids", ids)

    @property
    def class_count(self) -> int:
        return self.values.shape[0]

    @property
    def attribute_count(self) -> int:
        return self.values.shape[1]

    def row(self, y: int) -> np.ndarray:
        return self.values[y]

    def phrase(self, i: int) -> str:
        if self.vocabulary is None:
            return f"attribute_{i}"
        return self.vocabulary[i]

    def normalized(self) -> "AttributeMatrix":
        norms = np.linalg.norm(self.values, axis=1, keepdims=True)
        return replace(self, values=self.values / np.where(norms > 0, norms, 1.0))


@dataclass(frozen=True)
class SJEConfig:
    learning_rate: float = 0.01
    epochs: int = 50
    seed: int = 0
    cost: str = "zero_one"
    decision_rule: str = "euclidean"
    normalize_attributes: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.cost != "zero_one":
            raise ValueError(f"unsupported cost {self.cost!r}")
        if self.decision_rule not in DECISION_RULES:
            raise ValueError(f"unknown decision rule {self.decision_rule!r}")


@dataclass(frozen=True)
class AttributePrediction:
    values: np.ndarray
    source: str
    predicted_class: int
    true_class: int


def _vec(v, name) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be a vector, got shape {v.shape}")
    return v


def compat(theta, W, phi_y) -> float:
    theta = _vec(theta, "theta")
    phi_y = _vec(phi_y, "phi")
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (theta.shape[0], phi_y.shape[0]):
        raise DimensionError(
            f"W of shape {W.shape} does not chain ({theta.shape[0]}, {phi_y.shape[0]})"
        )
    return float(theta @ W @ phi_y)


def init_compat(feature_dim: int, attribute_count: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.uniform(-1e-3, 1e-3, size=(feature_dim, attribute_count))


def zero_one_cost(y_true: int, class_count: int) -> np.ndarray:
    cost = np.ones(class_count)
    cost[y_true] = 0.0
    return cost


def max_violator(theta, W, Phi: AttributeMatrix, y_true: int, cfg: SJEConfig | None = None):
    """Class maximizing ``cost(y_n, y) + F(x, y) - F(x, y_n)`` over ``y != y_n``.

    Returns ``(class, value)``; the class is ``None`` when the best value is
    not positive. Ties go to the lowest class index.
    """
    if Phi.class_count < 2:
        raise ValueError("need at least two classes")
    if not 0 <= y_true < Phi.class_count:
        raise ValueError(f"class {y_true} out of range")
    theta = _vec(theta, "theta")
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (theta.shape[0], Phi.attribute_count):
        raise DimensionError(f"W of shape {W.shape} does not chain")
    scores = Phi.values @ (theta @ W)
    margins = zero_one_cost(y_true, Phi.class_count) + scores - scores[y_true]
    margins[y_true] = -np.inf
    best = int(np.argmax(margins))
    value = float(margins[best])
    return (best if value > 0 else None), value


def sje_update(W, theta, phi_true, phi_viol, lr: float) -> np.ndarray:
    theta = _vec(theta, "theta")
    diff = _vec(phi_true, "phi_true") - _vec(phi_viol, "phi_viol")
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (theta.shape[0], diff.shape[0]):
        raise DimensionError(f"W of shape {W.shape} does not chain")
    return W + lr * np.outer(theta, diff)


def train_sje(features, labels, Phi: AttributeMatrix, cfg: SJEConfig) -> np.ndarray:
    """Max-violator SGD over the samples in a seeded shuffle order per epoch.

    When ``cfg.normalize_attributes`` is set, pass the same ``Phi`` to
    :func:`classify` via :func:`effective_attributes`.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("train_sje needs a non-empty 2-D feature array")
    if labels.shape != (features.shape[0],):
        raise DimensionError("one label per feature row required")
    if np.any(labels < 0) or np.any(labels >= Phi.class_count):
        raise ValueError("label out of range")
    Phi = effective_attributes(Phi, cfg)
    W = init_compat(features.shape[1], Phi.attribute_count, cfg.seed)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 1])))
    for _ in range(cfg.epochs):
        for n in rng.permutation(features.shape[0]):
            y = int(labels[n])
            viol, _ = max_violator(features[n], W, Phi, y, cfg)
            if viol is not None:
                W = sje_update(W, features[n], Phi.values[y], Phi.values[viol], cfg.learning_rate)
    return W


def effective_attributes(Phi: AttributeMatrix, cfg: SJEConfig) -> AttributeMatrix:
    return Phi.normalized() if cfg.normalize_attributes else Phi


def predict_attributes(theta, W) -> np.ndarray:
    """``theta W`` for a feature vector or a batch of feature rows."""
    theta = np.asarray(theta, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if theta.ndim not in (1, 2) or W.ndim != 2 or theta.shape[-1] != W.shape[0]:
        raise DimensionError(f"features {theta.shape} do not chain with W {W.shape}")
    return theta @ W


def classify(A, Phi: AttributeMatrix, rule: str = "euclidean"):
    """Nearest class attribute vector (euclidean) or highest dot score."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape[-1] != Phi.attribute_count:
        raise DimensionError(f"attribute vector length {A.shape[-1]} != {Phi.attribute_count}")
    if rule == "euclidean":
        diff = A[..., None, :] - Phi.values
        out = np.argmin(np.sqrt(np.sum(diff * diff, axis=-1)), axis=-1)
    elif rule == "dot":
        out = np.argmax(A @ Phi.values.T, axis=-1)
    else:
        raise ValueError(f"unknown decision rule {rule!r}")
    return int(out) if A.ndim == 1 else out


def predict_class(features, W, Phi: AttributeMatrix, cfg: SJEConfig):
    return classify(predict_attributes(features, W), effective_attributes(Phi, cfg),
                    cfg.decision_rule)


def describe(theta, W, Phi: AttributeMatrix, cfg: SJEConfig, true_class: int,
             source: str) -> AttributePrediction:
    A = predict_attributes(theta, W)
    return AttributePrediction(A, source, predict_class(theta, W, Phi, cfg), int(true_class))


def sje_accuracy(features, labels, W, Phi: AttributeMatrix, cfg: SJEConfig) -> float:
    preds = predict_class(features, W, Phi, cfg)
    return float(np.mean(np.asarray(preds) == np.asarray(labels)))

