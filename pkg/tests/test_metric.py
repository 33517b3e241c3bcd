import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tarpro import metric, nn
from tarpro.datasets import gen_two_moons, rotation_domains
from tarpro.seeding import derive_rng


def identity_model(dim=2, tau=0.1):
    net = nn.Mlp([nn.Layer(np.eye(dim), np.zeros(dim))])
    return metric.MetricModel(net, tau=tau)


def test_cosine_basic():
    assert metric.cosine_sim(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0
    assert metric.cosine_sim(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    got = metric.cosine_sim(np.array([1.0, 1.0]), np.array([1.0, 0.0]))
    assert np.isclose(got, 1.0 / math.sqrt(2.0))


def test_cosine_zero_norm_raises():
    with pytest.raises(FloatingPointError):
        metric.cosine_sim(np.zeros(3), np.ones(3))


def test_pair_prob_scalar_values():
    assert metric.pair_prob(0.0, 0.5) == 0.5
    # independent scalar oracle: 1 / (1 + exp(-s/tau))
    assert np.isclose(metric.pair_prob(1.0, 0.1), 1.0 / (1.0 + math.exp(-10.0)), rtol=1e-12)
    assert np.isclose(metric.pair_prob(-1.0, 0.1), 1.0 / (1.0 + math.exp(10.0)), rtol=1e-12)
    assert np.isclose(metric.pair_prob(1.0, 0.1), 0.9999546, atol=1e-7)
    assert np.isclose(metric.pair_prob(-1.0, 0.1), 4.5398e-5, atol=1e-9)


def test_pair_prob_monotone():
    taus = [0.05, 0.1, 1.0]
    for tau in taus:
        vals = [metric.pair_prob(s, tau) for s in np.linspace(-1, 1, 9)]
        assert all(a < b for a, b in zip(vals, vals[1:]))


def test_loss_same_class_aligned_near_zero():
    model = identity_model()
    x = np.array([[1.0, 0.0], [2.0, 0.0]])  # same direction -> all sims 1
    y = np.array([0, 0])
    assert metric.pairwise_loss(model, x, y) < 1e-4


def test_loss_huge_tau_gives_ln2():
    # s/tau -> 0 makes every pair probability 0.5, so BCE is ln 2 throughout.
    model = identity_model(tau=1e9)
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    y = np.array([0, 1, 0])
    assert np.isclose(metric.pairwise_loss(model, x, y), math.log(2.0), atol=1e-8)


def test_loss_two_example_hand_sum():
    # Orthogonal features, different labels, tau=0.1. Four ordered pairs:
    # two self-pairs BCE(sigmoid(10), 1) and two cross pairs BCE(0.5, 0).
    model = identity_model(tau=0.1)
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    y = np.array([0, 1])
    p_self = 1.0 / (1.0 + math.exp(-10.0))
    expected = (2.0 * -math.log(p_self) + 2.0 * -math.log(0.5)) / 4.0
    assert np.isclose(metric.pairwise_loss(model, x, y), expected, rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_pair_loss_gradient_matches_fd(seed):
    rng = derive_rng(seed, "metric-fd")
    net = nn.init_mlp([2, 5, 3], rng)
    model = metric.MetricModel(net, tau=0.1)
    x = rng.normal(size=(5, 2))
    y = rng.integers(0, 2, size=5)

    def loss_and_grads():
        loss, grads = metric.pairwise_loss_grads(model, x, y)
        return loss, nn.flatten_grads(grads)

    err = nn.gradient_check(loss_and_grads, net.param_arrays())
    assert err < 1e-4


@settings(max_examples=15, deadline=None)
@given(scale_a=st.floats(0.1, 50.0), scale_b=st.floats(0.1, 50.0))
def test_scale_invariance(scale_a, scale_b):
    a = np.array([0.3, -1.2, 0.5])
    b = np.array([1.0, 0.4, -0.2])
    s1 = metric.pair_prob(metric.cosine_sim(a, b), 0.1)
    s2 = metric.pair_prob(metric.cosine_sim(scale_a * a, scale_b * b), 0.1)
    assert np.isclose(s1, s2, rtol=1e-9)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_loss_permutation_invariant(seed):
    rng = derive_rng(seed, "metric-perm")
    net = nn.init_mlp([2, 4, 3], rng)
    model = metric.MetricModel(net, tau=0.1)
    x = rng.normal(size=(6, 2))
    y = rng.integers(0, 3, size=6)
    perm = rng.permutation(6)
    a = metric.pairwise_loss(model, x, y)
    b = metric.pairwise_loss(model, x[perm], y[perm])
    assert np.isclose(a, b, rtol=1e-12)


def test_train_zero_epochs_returns_initialized():
    data = gen_two_moons(rotation_domains([0.0]), 40, 0.08, seed=1)
    cfg = metric.MetricTrainConfig(epochs=0, seed=7)
    model, history = metric.train_metric(data, cfg)
    init = metric.init_metric(cfg, data.dim)
    for a, b in zip(model.net.param_arrays(), init.net.param_arrays()):
        assert np.array_equal(a, b)
    assert history == []


def test_train_refuses_single_class():
    data = gen_two_moons(rotation_domains([0.0]), 40, 0.08, seed=1)
    single = data.select(data.y == 0)
    with pytest.raises(ValueError):
        metric.train_metric(single, metric.MetricTrainConfig(epochs=1))


def test_train_separates_separable_toy():
    data = gen_two_moons(rotation_domains([0.0]), 100, 0.05, seed=3)
    cfg = metric.MetricTrainConfig(epochs=200, seed=3, hidden_width=32, hidden_depth=2)
    model, history = metric.train_metric(data, cfg)
    bank = metric.embed(model, data)
    same = bank.labels[:, None] == bank.labels[None, :]
    sims = bank.features @ bank.features.T
    off_diag = ~np.eye(len(bank), dtype=bool)
    intra = sims[same & off_diag].mean()
    inter = sims[~same].mean()
    assert intra - inter >= 0.5
    assert history[-1] < history[0]


def test_embed_rows_unit_norm_and_deterministic():
    data = gen_two_moons(rotation_domains([0, 15]), 60, 0.08, seed=2)
    model, _ = metric.train_metric(data, metric.MetricTrainConfig(epochs=2, seed=0))
    bank = metric.embed(model, data)
    assert np.allclose(np.linalg.norm(bank.features, axis=1), 1.0, atol=1e-9)
    again = metric.embed(model, data)
    assert np.array_equal(bank.features, again.features)


def test_embed_cosine_equals_stored_dot():
    rng = derive_rng(5, "metric-dot")
    net = nn.init_mlp([2, 6, 4], rng)
    model = metric.MetricModel(net)
    x = rng.normal(size=(8, 2))
    z = metric.embed_features(model, x)
    for i in range(4):
        for j in range(4):
            assert np.isclose(
                metric.cosine_sim(z[i], z[j]), float(z[i] @ z[j]), atol=1e-12
            )


def test_embed_zero_output_names_index():
    net = nn.Mlp([nn.Layer(np.zeros((2, 3)), np.zeros(3))])
    model = metric.MetricModel(net)
    with pytest.raises(FloatingPointError, match="example 0"):
        metric.embed_features(model, np.array([[1.0, 2.0]]))
