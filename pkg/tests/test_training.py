import numpy as np
import pytest

from pnml.data import synth_blobs
from pnml.nn import Layer, ModelParams
from pnml.training import (FreezeSpec, HyperParams, accuracy, erm_fit,
                           init_params, mean_nll, sgd_train)
from pnml.nn import loss_and_grad

from conftest import rand_model


def tiny_dataset(rng, n=6, d=3, classes=2, seed=0):
    return synth_blobs(n, classes, d, 5.0, seed)


def params_equal(a, b):
    return all(np.array_equal(x.weight, y.weight)
               and np.array_equal(x.bias, y.bias)
               for x, y in zip(a.layers, b.layers))


def test_zero_epochs_returns_input(rng):
    m = rand_model(rng, [3, 2])
    ds = tiny_dataset(rng)
    out = sgd_train(m, ds, HyperParams(epochs=0))
    assert params_equal(out, m)


def test_single_step_closed_form(rng):
    m = rand_model(rng, [3, 2])
    ds = tiny_dataset(rng, n=1, classes=2)
    ds = ds.subset([0])  # one sample
    eta = 0.05
    hp = HyperParams(lr_schedule=((0, eta),), momentum=0.0, weight_decay=0.0,
                     batch_size=1, epochs=1, seed=3)
    out = sgd_train(m, ds, hp)
    g = loss_and_grad(m, ds.features, ds.labels)
    for (layer0, layer1, (gw, gb)) in zip(m.layers, out.layers, g.param_grads):
        assert np.array_equal(layer1.weight, layer0.weight - eta * gw)
        assert np.array_equal(layer1.bias, layer0.bias - eta * gb)


def test_weight_decay_closed_form():
    # model already fits the data perfectly -> zero gradient; weights must
    # contract by (1 - eta*lambda) per step
    W = np.array([[60.0], [-60.0]])
    m = ModelParams((Layer(W, np.zeros(2)),))
    ds_X = np.array([[1.0], [-1.0]])
    ds_y = np.array([0, 1])
    from pnml.data import Dataset

    ds = Dataset(ds_X, ds_y, 2)
    eta, lam = 0.01, 0.1
    hp = HyperParams(lr_schedule=((0, eta),), weight_decay=lam, momentum=0.0,
                     batch_size=2, epochs=3, seed=0)
    out = sgd_train(m, ds, hp)
    expect = W * (1 - eta * lam) ** 3
    assert np.allclose(out.layers[0].weight, expect, rtol=1e-9)


def test_frozen_layers_bit_identical(rng):
    m = rand_model(rng, [4, 5, 3])
    ds = tiny_dataset(rng, d=4, classes=3)
    hp = HyperParams(epochs=3, batch_size=4, seed=9)
    out = sgd_train(m, ds, hp, FreezeSpec.last(1))  # only output layer moves
    assert np.array_equal(out.layers[0].weight, m.layers[0].weight)
    assert np.array_equal(out.layers[0].bias, m.layers[0].bias)
    assert not np.array_equal(out.layers[1].weight, m.layers[1].weight)


def test_fully_frozen_everything_unchanged(rng):
    m = rand_model(rng, [3, 3, 2])
    ds = tiny_dataset(rng)
    out = sgd_train(m, ds, HyperParams(epochs=5), FreezeSpec.last(0))
    assert params_equal(out, m)


def test_determinism_same_seed(rng):
    ds = tiny_dataset(rng, n=20)
    hp = HyperParams(lr_schedule=((0, 0.1),), epochs=30, batch_size=4,
                     momentum=0.9, seed=42)
    a = erm_fit(ds, [3, 4, 2], hp)
    b = erm_fit(ds, [3, 4, 2], hp)
    assert params_equal(a, b)


def test_erm_separable_blobs_perfect_accuracy():
    ds = synth_blobs(25, 2, 4, 20.0, 7)
    hp = HyperParams(lr_schedule=((0, 0.5),), epochs=200, batch_size=10,
                     seed=1)
    m = erm_fit(ds, [4, 2], hp)
    assert accuracy(m, ds) == 1.0


def test_convex_final_loss_not_worse(rng):
    ds = synth_blobs(20, 3, 5, 3.0, 11)
    hp = HyperParams(lr_schedule=((0, 0.05),), epochs=60, batch_size=8, seed=2)
    m0 = init_params([5, 3], hp.seed)
    m1 = sgd_train(m0, ds, hp)
    assert mean_nll(m1, ds) <= mean_nll(m0, ds)


def test_lr_schedule_validation():
    with pytest.raises(ValueError):
        HyperParams(lr_schedule=((1, 0.1),))
    with pytest.raises(ValueError):
        HyperParams(lr_schedule=((0, 0.1), (0, 0.2)))
    hp = HyperParams(lr_schedule=((0, 0.1), (10, 0.01), (20, 0.001)))
    assert hp.lr_at(0) == 0.1
    assert hp.lr_at(9) == 0.1
    assert hp.lr_at(10) == 0.01
    assert hp.lr_at(25) == 0.001


def test_arch_mismatch_rejected(rng):
    ds = tiny_dataset(rng)
    with pytest.raises(ValueError):
        erm_fit(ds, [3, 5], HyperParams(epochs=1))  # wrong output size
    with pytest.raises(ValueError):
        erm_fit(ds, [4, 2], HyperParams(epochs=1))  # wrong input size
