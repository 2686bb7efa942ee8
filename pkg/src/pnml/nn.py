"""Dense MLP forward/backward passes with softmax cross-entropy.

All math is float64. Hidden layers use the rectifier (derivative at 0
defined as 0), the output layer is linear followed by softmax. Loss and
gradients are computed in natural-log units; base-10 conversion happens
in the metrics layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Dimension mismatch between parameters and inputs."""


@dataclass(frozen=True)
class Layer:
    """One dense layer: weight is (out, in), bias is (out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ShapeError(f"bad layer shapes: weight {w.shape}, bias {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("non-finite layer parameters")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class ModelParams:
    """Ordered dense layers defining one hypothesis (MLP or softmax regression)."""

    layers: tuple[Layer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ShapeError("model needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_dim

    def copy(self) -> "ModelParams":
        return ModelParams(
            tuple(Layer(l.weight.copy(), l.bias.copy()) for l in self.layers)
        )

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for l in self.layers:
            h.update(np.ascontiguousarray(l.weight).tobytes())
            h.update(np.ascontiguousarray(l.bias).tobytes())
        return h.hexdigest()


@dataclass
class GradBundle:
    """Parameter gradients, optional input gradient, and the batch mean loss (nats)."""

    param_grads: list[tuple[np.ndarray, np.ndarray]]
    input_grad: np.ndarray | None
    loss: float


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _logits(params: ModelParams, X: np.ndarray) -> tuple[np.ndarray, list, list]:
    """Forward pass over a batch X (B, d). Returns logits plus per-layer
    activations and pre-activations for backprop."""
    acts = [X]
    pre = []
    a = X
    n = len(params.layers)
    for k, layer in enumerate(params.layers):
        z = a @ layer.weight.T + layer.bias
        pre.append(z)
        a = relu(z) if k < n - 1 else z
        acts.append(a)
    return a, acts, pre


def _check_input(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.in_dim:
        raise ShapeError(f"input dim {x.shape} does not match model ({params.in_dim})")
    return x


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class probabilities p_theta(.|x) for a single input."""
    x = _check_input(params, x)
    logits, _, _ = _logits(params, x[None, :])
    return softmax(logits[0])


def forward_batch(params: ModelParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ShapeError(f"batch shape {X.shape} does not match model")
    logits, _, _ = _logits(params, X)
    return softmax(logits)


def log_forward_batch(params: ModelParams, X: np.ndarray) -> np.ndarray:
    """Log-probabilities (nats) via log-sum-exp, never log(softmax)."""
    X = np.asarray(X, dtype=np.float64)
    logits, _, _ = _logits(params, X)
    return log_softmax(logits)


def loss_and_grad(
    params: ModelParams,
    X: np.ndarray,
    y: np.ndarray,
    trainable: tuple[bool, ...] | None = None,
) -> GradBundle:
    """Mean NLL over the batch and its gradients.

    `trainable[k]` False zeroes the gradient of layer k. The gradient with
    respect to the input is populated only for singleton batches.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty or malformed batch")
    if X.shape[1] != params.in_dim:
        raise ShapeError(f"batch feature dim {X.shape[1]} != model {params.in_dim}")
    C = params.num_classes
    if y.min() < 0 or y.max() >= C:
        raise ValueError("label out of range")

    B = X.shape[0]
    n = len(params.layers)
    if trainable is None:
        trainable = (True,) * n

    logits, acts, pre = _logits(params, X)
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(B), y].mean())

    # delta at the output: (softmax - onehot) / B
    delta = softmax(logits)
    delta[np.arange(B), y] -= 1.0
    delta /= B

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * n  # type: ignore
    for k in range(n - 1, -1, -1):
        layer = params.layers[k]
        if trainable[k]:
            gw = delta.T @ acts[k]
            gb = delta.sum(axis=0)
        else:
            gw = np.zeros_like(layer.weight)
            gb = np.zeros_like(layer.bias)
        grads[k] = (gw, gb)
        if k > 0:
            delta = (delta @ layer.weight) * (pre[k - 1] > 0)
        else:
            delta = delta @ layer.weight  # d loss / d input

    input_grad = delta[0].copy() if B == 1 else None
    return GradBundle(param_grads=grads, input_grad=input_grad, loss=loss)


def input_gradient(params: ModelParams, x: np.ndarray, y: int) -> np.ndarray:
    """Gradient of -ln p_theta(y|x) with respect to the input vector."""
    x = _check_input(params, x)
    if not 0 <= y < params.num_classes:
        raise ValueError(f"label {y} out of range")
    bundle = loss_and_grad(params, x[None, :], np.array([y]))
    assert bundle.input_grad is not None
    return bundle.input_grad
