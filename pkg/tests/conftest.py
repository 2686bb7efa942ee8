import numpy as np
import pytest

from pnml.nn import Layer, ModelParams, loss_and_grad


def rand_model(rng, dims):
    layers = []
    for fan_in, fan_out in zip(dims, dims[1:]):
        layers.append(Layer(rng.standard_normal((fan_out, fan_in)) * 0.5,
                            rng.standard_normal(fan_out) * 0.1))
    return ModelParams(tuple(layers))


def rand_small_model(rng, max_layers=3, max_units=16, num_classes=None):
    depth = int(rng.integers(1, max_layers + 1))
    dims = [int(rng.integers(2, max_units + 1)) for _ in range(depth + 1)]
    if num_classes is not None:
        dims[-1] = num_classes
    return rand_model(rng, dims)


def fd_param_grads(params, X, y, h=1e-5):
    """Central finite differences of the mean NLL over every parameter."""
    grads = []
    for k, layer in enumerate(params.layers):
        gw = np.zeros_like(layer.weight)
        gb = np.zeros_like(layer.bias)
        for arr, out in ((layer.weight, gw), (layer.bias, gb)):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                for sign in (+1, -1):
                    pert = [Layer(l.weight.copy(), l.bias.copy())
                            for l in params.layers]
                    tgt = pert[k].weight if arr is layer.weight else pert[k].bias
                    tgt[idx] += sign * h
                    loss = loss_and_grad(ModelParams(tuple(pert)), X, y).loss
                    out[idx] += sign * loss / (2 * h)
        grads.append((gw, gb))
    return grads


def fd_input_grad(params, x, y, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        for sign in (+1, -1):
            xp = x.copy()
            xp[i] += sign * h
            loss = loss_and_grad(params, xp[None, :], np.array([y])).loss
            g[i] += sign * loss / (2 * h)
    return g


def max_rel_err(a, b, floor=1e-6):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a),
                                                              np.abs(b)), floor)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
