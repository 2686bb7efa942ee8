"""SGD with momentum, weight decay, LR schedules, mini-batches and layer freezing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .nn import Layer, ModelParams, forward_batch, loss_and_grad


@dataclass(frozen=True)
class HyperParams:
    """Optimizer settings. lr_schedule maps epoch starts to rates, e.g.
    ((0, 0.01), (40, 0.001)); the first entry must start at epoch 0."""

    lr_schedule: tuple[tuple[int, float], ...] = ((0, 0.01),)
    weight_decay: float = 0.0
    momentum: float = 0.0
    batch_size: int = 32
    epochs: int = 0
    seed: int = 0

    def __post_init__(self):
        sched = tuple((int(e), float(r)) for e, r in self.lr_schedule)
        if not sched or sched[0][0] != 0:
            raise ValueError("lr_schedule must start at epoch 0")
        starts = [e for e, _ in sched]
        if starts != sorted(starts) or len(set(starts)) != len(starts):
            raise ValueError("lr_schedule epochs must be strictly increasing")
        if any(r < 0 for _, r in sched):
            raise ValueError("negative learning rate")
        if self.weight_decay < 0 or not (0 <= self.momentum < 1):
            raise ValueError("bad weight_decay or momentum")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("bad batch_size or epochs")
        object.__setattr__(self, "lr_schedule", sched)

    def lr_at(self, epoch: int) -> float:
        lr = self.lr_schedule[0][1]
        for start, rate in self.lr_schedule:
            if epoch >= start:
                lr = rate
        return lr

    def replace(self, **kw) -> "HyperParams":
        from dataclasses import replace

        return replace(self, **kw)


@dataclass(frozen=True)
class FreezeSpec:
    """Which layers SGD may update, indexed from the output end
    (0 = output layer, 1 = the one before it, ...)."""

    trainable_from_output: frozenset[int]

    @staticmethod
    def all_layers(num_layers: int) -> "FreezeSpec":
        return FreezeSpec(frozenset(range(num_layers)))

    @staticmethod
    def last(k: int) -> "FreezeSpec":
        """The k layers closest to the output; k = 0 freezes everything."""
        return FreezeSpec(frozenset(range(k)))

    def mask(self, num_layers: int) -> tuple[bool, ...]:
        for i in self.trainable_from_output:
            if not 0 <= i < num_layers:
                raise ValueError(f"freeze index {i} invalid for {num_layers} layers")
        return tuple(
            (num_layers - 1 - k) in self.trainable_from_output
            for k in range(num_layers)
        )


def _batch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, epoch])
    return rng.permutation(n)


def sgd_train(
    params0: ModelParams,
    dataset: Dataset,
    hyper: HyperParams,
    freeze: FreezeSpec | None = None,
) -> ModelParams:
    """Run `hyper.epochs` full passes of momentum SGD.

    Per step: v <- mu*v - eta*(g + lambda*w); w <- w + v. Batch order is a
    seeded permutation per epoch. Frozen layers come back bit-identical.
    """
    n = dataset.num_samples
    if n == 0:
        raise ValueError("empty dataset")
    if dataset.features.shape[1] != params0.in_dim:
        raise ValueError("dataset feature dim does not match model")
    nl = len(params0.layers)
    mask = freeze.mask(nl) if freeze is not None else (True,) * nl

    weights = [l.weight.copy() for l in params0.layers]
    biases = [l.bias.copy() for l in params0.layers]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    mu = hyper.momentum
    lam = hyper.weight_decay

    for epoch in range(hyper.epochs):
        eta = hyper.lr_at(epoch)
        order = _batch_order(hyper.seed, epoch, n)
        for lo in range(0, n, hyper.batch_size):
            idx = order[lo : lo + hyper.batch_size]
            cur = ModelParams(
                tuple(Layer(w, b) for w, b in zip(weights, biases))
            )
            g = loss_and_grad(
                cur, dataset.features[idx], dataset.labels[idx], trainable=mask
            )
            for k in range(nl):
                if not mask[k]:
                    continue
                gw, gb = g.param_grads[k]
                vel_w[k] = mu * vel_w[k] - eta * (gw + lam * weights[k])
                vel_b[k] = mu * vel_b[k] - eta * (gb + lam * biases[k])
                weights[k] = weights[k] + vel_w[k]
                biases[k] = biases[k] + vel_b[k]

    out = []
    for k, layer in enumerate(params0.layers):
        if mask[k]:
            out.append(Layer(weights[k], biases[k]))
        else:
            out.append(Layer(layer.weight.copy(), layer.bias.copy()))
    return ModelParams(tuple(out))


def init_params(arch: list[int], seed: int) -> ModelParams:
    """Uniform fan-in-scaled initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if len(arch) < 2:
        raise ValueError("arch needs at least input and output sizes")
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    layers = []
    for fan_in, fan_out in zip(arch, arch[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append(Layer(w, b))
    return ModelParams(tuple(layers))


def erm_fit(dataset: Dataset, arch: list[int], hyper: HyperParams) -> ModelParams:
    """Seeded random init followed by SGD with every layer trainable."""
    if arch[-1] != dataset.num_classes:
        raise ValueError("arch output size must equal class count")
    if arch[0] != dataset.features.shape[1]:
        raise ValueError("arch input size must equal feature dim")
    params0 = init_params(arch, hyper.seed)
    return sgd_train(params0, dataset, hyper, FreezeSpec.all_layers(len(arch) - 1))


def accuracy(params: ModelParams, dataset: Dataset) -> float:
    probs = forward_batch(params, dataset.features)
    return float((probs.argmax(axis=1) == dataset.labels).mean())


def mean_nll(params: ModelParams, dataset: Dataset) -> float:
    from .nn import log_forward_batch

    logp = log_forward_batch(params, dataset.features)
    return float(-logp[np.arange(dataset.num_samples), dataset.labels].mean())
