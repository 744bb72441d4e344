"""Small feed-forward classifier with hand-written forward/backward passes.

Vectors and matrices are plain float64 numpy arrays. Layer weights are stored
as ``(out_dim, in_dim)`` so that a layer computes ``z = W @ a + b``. Every
function that takes an input vector also accepts a 2-D batch with one sample
per row; batched gradients are per-row for inputs and batch means for
parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "identity")


class DimensionError(ValueError):
    """Raised when array shapes do not chain."""


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2:
            raise DimensionError(f"weight must be 2-D, got shape {w.shape}")
        if b.shape[0] != w.shape[0]:
            raise DimensionError(
                f"bias length {b.shape[0]} does not match weight rows {w.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class MLPParams:
    """Ordered layers of the general classifier; the last layer emits logits."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("model needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(
                    f"layer output {prev.out_dim} does not feed input {nxt.in_dim}"
                )
        if layers[-1].activation != "identity":
            raise ValueError("final layer must use the identity activation")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def class_count(self) -> int:
        return self.layers[-1].out_dim

    @property
    def shape(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def with_params(self, params: Sequence[tuple[np.ndarray, np.ndarray]]) -> "MLPParams":
        return MLPParams(
            tuple(Layer(w, b, layer.activation) for (w, b), layer in zip(params, self.layers))
        )

    def params(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(layer.weight, layer.bias) for layer in self.layers]


@dataclass(frozen=True)
class ForwardTrace:
    x: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def logits(self) -> np.ndarray:
        return self.post[-1]


def init_mlp(shape: Sequence[int], seed: int) -> MLPParams:
    """Glorot-uniform weights and zero biases; relu on every hidden layer."""
    shape = [int(s) for s in shape]
    if len(shape) < 2 or min(shape) < 1:
        raise DimensionError(f"invalid model shape {shape}")
    rng = np.random.Generator(np.random.Philox(seed))
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(shape, shape[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = "identity" if i == len(shape) - 2 else "relu"
        layers.append(Layer(w, np.zeros(fan_out), act))
    return MLPParams(tuple(layers))


def _as_input(model: MLPParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != model.input_dim:
        raise DimensionError(
            f"input of shape {x.shape} does not match input_dim {model.input_dim}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def _labels(model: MLPParams, label, n: int | None) -> np.ndarray:
    y = np.asarray(label)
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError(f"labels must be integers, got {y.dtype}")
    if n is None:
        if y.ndim != 0:
            raise DimensionError("a single input takes a scalar label")
    elif y.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {y.shape}")
    if np.any(y < 0) or np.any(y >= model.class_count):
        raise ValueError(f"label out of range for {model.class_count} classes")
    return y


def forward(model: MLPParams, x) -> ForwardTrace:
    x = _as_input(model, x)
    pre, post = [], []
    a = x
    for layer in model.layers:
        z = a @ layer.weight.T + layer.bias
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        pre.append(z)
        post.append(a)
    return ForwardTrace(x, pre, post)


def logits(model: MLPParams, x) -> np.ndarray:
    return forward(model, x).logits


def predict(model: MLPParams, x) -> np.ndarray:
    return np.argmax(logits(model, x), axis=-1)


def extract_features(model: MLPParams, x) -> np.ndarray:
    """Penultimate-layer activations, used as image features for the SJE."""
    if len(model.layers) < 2:
        raise DimensionError("feature extraction needs a model with at least two layers")
    return forward(model, x).post[-2]


def log_softmax(z: np.ndarray) -> np.ndarray:
    shift = z - np.max(z, axis=-1, keepdims=True)
    return shift - np.log(np.sum(np.exp(shift), axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def cross_entropy(z, label):
    """Negative log-softmax of the labelled class (per row for batches)."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(label)
    if z.ndim == 1:
        if y.ndim != 0 or not 0 <= int(y) < z.shape[0]:
            raise ValueError(f"label {label!r} out of range for {z.shape[0]} classes")
        return float(-log_softmax(z)[int(y)])
    if y.shape != (z.shape[0],):
        raise DimensionError(f"expected {z.shape[0]} labels, got shape {y.shape}")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise ValueError(f"label out of range for {z.shape[1]} classes")
    return -log_softmax(z)[np.arange(z.shape[0]), y]


def loss(model: MLPParams, x, label):
    return cross_entropy(logits(model, x), label)


def _backward(model: MLPParams, trace: ForwardTrace, y: np.ndarray):
    """Gradients of the summed loss; returns (per-layer (dW, db), dX)."""
    z = trace.logits
    delta = softmax(z)
    if delta.ndim == 1:
        delta[y] -= 1.0
    else:
        delta[np.arange(delta.shape[0]), y] -= 1.0
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            # subgradient 0 at exactly 0
            delta = delta * (trace.pre[i] > 0.0)
        a_prev = trace.x if i == 0 else trace.post[i - 1]
        if delta.ndim == 1:
            dw = np.outer(delta, a_prev)
            db = delta.copy()
        else:
            dw = delta.T @ a_prev
            db = delta.sum(axis=0)
        grads[i] = (dw, db)
        delta = delta @ layer.weight
    return grads, delta


def grad_input(model: MLPParams, x, label) -> np.ndarray:
    """Gradient of the cross-entropy with respect to the input (per row)."""
    x = _as_input(model, x)
    y = _labels(model, label, None if x.ndim == 1 else x.shape[0])
    _, dx = _backward(model, forward(model, x), y)
    return dx


def grad_params(model: MLPParams, x, label) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parameter gradients of the cross-entropy, averaged over a batch."""
    x = _as_input(model, x)
    y = _labels(model, label, None if x.ndim == 1 else x.shape[0])
    grads, _ = _backward(model, forward(model, x), y)
    if x.ndim == 2:
        n = x.shape[0]
        grads = [(dw / n, db / n) for dw, db in grads]
    return grads


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.ravel(a)
    b = np.ravel(b)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def _loss_change(model: MLPParams, trace: ForwardTrace, start: int, dz: np.ndarray, y: int):
    """Exact change in loss when layer ``start``'s pre-activation moves by ``dz``.

    The perturbation is carried forward as a difference rather than as an
    absolute value, so a loss change of order ``h * grad`` is not buried under
    rounding of the loss itself. Also returns, per row, whether any relu
    changed between active and inactive along the way.
    """
    n_layers = len(model.layers)
    crossed = np.zeros(dz.shape[0], dtype=bool)
    for i in range(start, n_layers):
        z = trace.pre[i]
        if model.layers[i].activation == "relu":
            moved = z + dz
            both_on = (z > 0.0) & (moved > 0.0)
            crossed |= np.any((z > 0.0) != (moved > 0.0), axis=1)
            da = np.where(both_on, dz, np.maximum(moved, 0.0) - np.maximum(z, 0.0))
        else:
            da = dz
        if i + 1 < n_layers:
            dz = da @ model.layers[i + 1].weight.T
        else:
            dz = da
    p = softmax(trace.logits)
    # lse(z + dz) - lse(z) = log1p(sum_k p_k * expm1(dz_k))
    return np.log1p(np.expm1(dz) @ p) - dz[:, y], crossed


def numeric_grads(model: MLPParams, x, label, h: float = 1e-5, kink_safe: bool = True):
    """Central-difference gradients with respect to the input and every parameter.

    Each coordinate ``k`` gets ``(L(+h e_k) - L(-h e_k)) / (2h)``, batched over
    coordinates. With ``kink_safe`` a coordinate whose +-h move would switch a
    relu on or off (a pre-activation closer to 0 than the step) is retried
    with the step divided by 8, up to 20 times; the quotient across a kink
    measures neither side's slope. A pre-activation exactly at 0 keeps
    crossing and is reported as it is.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = _as_input(model, x)
    if x.ndim != 1:
        raise DimensionError("numeric_grads takes a single input vector")
    y = int(_labels(model, label, None))
    trace = forward(model, x)

    def central(start, dz_plus, dz_minus):
        # dz_minus is always -dz_plus here
        scale = np.ones(dz_plus.shape[0])
        for _ in range(21 if kink_safe else 1):
            up, c_up = _loss_change(model, trace, start, scale[:, None] * dz_plus, y)
            down, c_down = _loss_change(model, trace, start, scale[:, None] * dz_minus, y)
            crossed = c_up | c_down
            if not kink_safe or not crossed.any():
                break
            scale = np.where(crossed, scale / 8.0, scale)
        return (up - down) / (2 * h * scale)

    w0 = model.layers[0].weight
    gx = central(0, (h * np.eye(x.shape[0])) @ w0.T, (-h * np.eye(x.shape[0])) @ w0.T)

    out = []
    for i, layer in enumerate(model.layers):
        a_prev = x if i == 0 else trace.post[i - 1]
        rows, cols = layer.weight.shape
        # weight (r, c) moved by h shifts pre-activation r by h * a_prev[c]
        r_idx = np.repeat(np.arange(rows), cols)
        c_idx = np.tile(np.arange(cols), rows)
        dzw = np.zeros((rows * cols, rows))
        dzw[np.arange(rows * cols), r_idx] = h * a_prev[c_idx]
        dzb = h * np.eye(rows)
        gw = central(i, dzw, -dzw).reshape(rows, cols)
        gb = central(i, dzb, -dzb)
        out.append((gw, gb))
    return gx, out


def finite_diff_check(model: MLPParams, x, label, h: float = 1e-5,
                      kink_safe: bool = True) -> float:
    """Max relative error between analytic and central-difference gradients.

    Covers the input gradient and all parameter gradients; the denominator is
    ``max(|a|, |b|, 1e-8)``. See :func:`numeric_grads` for ``kink_safe``.
    """
    gx_num, gp_num = numeric_grads(model, x, label, h, kink_safe)
    err = _rel_err(grad_input(model, x, label), gx_num)
    for (dw, db), (nw, nb) in zip(grad_params(model, x, label), gp_num):
        err = max(err, _rel_err(dw, nw), _rel_err(db, nb))
    return err
