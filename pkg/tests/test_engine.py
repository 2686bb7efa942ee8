import math

import numpy as np
import pytest

from pnml.data import synth_blobs
from pnml.engine import (DegenerateInputError, HypothesisClassSpec,
                         genie_predict, job_seed, normalize_pnml,
                         pnml_predict, twice_universal)
from pnml.nn import forward
from pnml.training import FreezeSpec, HyperParams, erm_fit


def setup_instance(seed=0, classes=3, steps2=3):
    train = synth_blobs(8, classes, 4, 4.0, seed)
    hp = HyperParams(lr_schedule=((0, 0.2),), epochs=80, batch_size=8,
                     momentum=0.9, seed=seed)
    erm = erm_fit(train, [4, 6, classes], hp)
    ft = HyperParams(lr_schedule=((0, 0.05),), epochs=steps2, batch_size=8,
                     seed=seed)
    spec = HypothesisClassSpec(FreezeSpec.last(1), ft)
    return train, erm, spec


def test_normalize_pnml_cases():
    q, C, g = normalize_pnml(np.eye(10)[0])
    assert np.array_equal(q, np.eye(10)[0])
    assert (C, g) == (1.0, 0.0)

    q, C, g = normalize_pnml(np.ones(10))
    assert np.allclose(q, 0.1)
    assert C == 10.0
    assert g == pytest.approx(1.0)

    q, C, g = normalize_pnml(np.array([0.8, 0.6, 0.2, 0.4]))
    assert C == pytest.approx(2.0)
    assert np.allclose(q, [0.4, 0.3, 0.1, 0.2])
    assert g == pytest.approx(math.log10(2.0), abs=1e-12)


def test_normalize_pnml_rejects_degenerate():
    with pytest.raises(DegenerateInputError):
        normalize_pnml(np.zeros(4))
    with pytest.raises(ValueError):
        normalize_pnml(np.array([1.5, 0.2]))


def test_zero_steps_collapses_to_erm():
    train, erm, spec = setup_instance(steps2=0)
    x = train.features[0]
    res = pnml_predict(erm, train, x, spec)
    erm_q = forward(erm, x)
    assert np.allclose(res.q_pnml, erm_q, atol=1e-12)
    assert res.regret_gamma == pytest.approx(0.0, abs=1e-12)
    assert res.normalization_C == pytest.approx(1.0, abs=1e-12)


def test_pnml_result_internal_consistency():
    train, erm, spec = setup_instance()
    x = train.features[3]
    res = pnml_predict(erm, train, x, spec)
    assert abs(res.q_pnml.sum() - 1.0) < 1e-9
    assert res.normalization_C == pytest.approx(res.genie_probs.sum())
    assert res.regret_gamma == math.log10(res.normalization_C)
    assert np.array_equal(res.q_pnml, res.genie_probs / res.normalization_C)
    assert res.regret_gamma >= -1e-12


def test_genie_matches_pnml_job_bit_identical():
    train, erm, spec = setup_instance()
    x = train.features[1]
    res = pnml_predict(erm, train, x, spec)
    for y in range(train.num_classes):
        prob, loss = genie_predict(erm, train, x, y, spec)
        assert prob == res.genie_probs[y]  # same job, same seed
        # loss identity: pNML loss = genie loss + regret
        pnml_loss = -math.log10(res.q_pnml[y])
        assert pnml_loss == pytest.approx(loss + res.regret_gamma, abs=1e-9)


def test_genie_zero_steps_equals_erm_loss():
    train, erm, spec = setup_instance(steps2=0)
    x = train.features[2]
    y = int(train.labels[2])
    prob, loss = genie_predict(erm, train, x, y, spec)
    erm_q = forward(erm, x)
    assert prob == pytest.approx(float(erm_q[y]), abs=1e-15)
    assert loss == pytest.approx(-math.log10(erm_q[y]), abs=1e-12)


def test_pnml_determinism():
    train, erm, spec = setup_instance()
    x = train.features[5]
    a = pnml_predict(erm, train, x, spec, keep_digests=True)
    b = pnml_predict(erm, train, x, spec, keep_digests=True)
    assert np.array_equal(a.genie_probs, b.genie_probs)
    assert a.per_label_params_digest == b.per_label_params_digest


def test_job_seed_independent_of_label_count():
    base = 987654321
    seeds = [job_seed(base, l) for l in range(10)]
    assert len(set(seeds)) == 10
    # adding labels never shifts earlier jobs' seeds
    assert seeds[:3] == [job_seed(base, l) for l in range(3)]


def test_twice_universal_cases():
    q1 = np.array([0.9, 0.1])
    q2 = np.array([0.1, 0.9])
    q, C = twice_universal([q1])
    assert np.array_equal(q, q1)
    assert C == 1.0

    q, C = twice_universal([q1, q2])
    assert C == pytest.approx(1.8)
    assert np.allclose(q, [0.5, 0.5])

    q, C = twice_universal([q1, q1, q1])
    assert np.allclose(q, q1)
    assert C == pytest.approx(1.0)

    with pytest.raises(ValueError):
        twice_universal([])


def test_twice_universal_regret_bound(rng):
    for _ in range(50):
        K = int(rng.integers(1, 5))
        qs = []
        for _ in range(K):
            raw = rng.random(6) + 1e-6
            qs.append(raw / raw.sum())
        q_tu, C = twice_universal(qs)
        assert 1.0 - 1e-12 <= C <= K + 1e-12
        for y in range(6):
            lhs = -math.log10(q_tu[y])
            rhs = min(-math.log10(q[y]) for q in qs) + math.log10(K)
            assert lhs <= rhs + 1e-9


def test_noise_regret_exceeds_in_distribution():
    # inputs far from the training manifold should be easier to sway
    train, erm, spec = setup_instance(seed=3, steps2=3)
    rng = np.random.default_rng(0)
    in_regrets = [pnml_predict(erm, train, train.features[i], spec).regret_gamma
                  for i in range(6)]
    noise = np.clip(rng.standard_normal((6, 4)), -1, 1)
    out_regrets = [pnml_predict(erm, train, noise[i], spec).regret_gamma
                   for i in range(6)]
    assert np.mean(out_regrets) > np.mean(in_regrets)
