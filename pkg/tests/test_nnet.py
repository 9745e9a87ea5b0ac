import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import forward_loop, mse_loop
from retina_grade.nnet import (
    MLP,
    TrainConfig,
    TrainingError,
    forward,
    gradient,
    init_mlp,
    mse,
    one_hot,
    predict_class,
    train,
)


def _finite_difference(net, X, T, eps=1e-5):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            up = mse(net, X, T)
            p[i] = old - eps
            down = mse(net, X, T)
            p[i] = old
            g[i] = (up - down) / (2 * eps)
        grads.append(g)
    return grads


def test_gradient_matches_finite_differences():
    worst = 0.0
    for seed in range(10):
        r = np.random.default_rng(seed)
        net = init_mlp(6, 5, 3, seed=seed)
        net.b1[:] = r.normal(scale=0.3, size=5)
        X = r.uniform(0, 1, (12, 6))
        T = one_hot(r.integers(1, 4, 12), 3)
        for a, f in zip(gradient(net, X, T).params(), _finite_difference(net, X, T)):
            worst = max(worst, np.max(np.abs(a - f) / np.maximum(np.abs(a) + np.abs(f), 1e-8)))
    assert worst < 1e-4


def test_forward_matches_loop(rng):
    net = init_mlp(4, 3, 2, seed=7)
    net.b2[:] = [0.1, -0.2]
    X = rng.uniform(-1, 1, (5, 4))
    Y = forward(net, X)
    for x, y in zip(X, Y):
        np.testing.assert_allclose(y, forward_loop(net.W1, net.b1, net.W2, net.b2, x), atol=1e-14)
    np.testing.assert_allclose(forward(net, X[0]), Y[0])
    T = one_hot([1, 2, 2, 1, 1], 2)
    assert abs(mse(net, X, T) - mse_loop(net.W1, net.b1, net.W2, net.b2, X, T)) < 1e-14


def test_init_is_seeded_uniform_with_zero_bias():
    a, b = init_mlp(20, 10, 2, seed=3), init_mlp(20, 10, 2, seed=3)
    np.testing.assert_array_equal(a.W1, b.W1)
    assert a.W1.shape == (10, 20) and a.W2.shape == (2, 10)
    assert np.abs(a.W1).max() <= 0.5 and np.abs(a.W2).max() <= 0.5
    assert not a.b1.any() and not a.b2.any()
    assert not np.array_equal(a.W1, init_mlp(20, 10, 2, seed=4).W1)


def test_training_separates_blobs(rng):
    X = np.vstack([rng.normal(0.25, 0.05, (40, 20)), rng.normal(0.75, 0.05, (40, 20))])
    y = np.r_[np.ones(40, int), np.full(40, 2)]
    net, err = train(init_mlp(20, 10, 2, seed=1), X, one_hot(y, 2), TrainConfig(epochs=1500))
    assert err < 0.05
    assert np.mean(predict_class(net, X) == y) == 1.0


def test_train_does_not_mutate_input(rng):
    net = init_mlp(3, 2, 2, seed=0)
    before = net.copy()
    train(net, rng.uniform(size=(4, 3)), one_hot([1, 2, 1, 2], 2), TrainConfig(epochs=10))
    for p, q in zip(net.params(), before.params()):
        np.testing.assert_array_equal(p, q)


def test_train_is_deterministic(rng):
    X = rng.uniform(size=(10, 4))
    T = one_hot(rng.integers(1, 3, 10), 2)
    a, ea = train(init_mlp(4, 3, 2, seed=5), X, T, TrainConfig(epochs=50))
    b, eb = train(init_mlp(4, 3, 2, seed=5), X, T, TrainConfig(epochs=50))
    assert ea == eb
    np.testing.assert_array_equal(a.W1, b.W1)


def test_divergence_raises():
    net = init_mlp(2, 2, 2, seed=0)
    X = np.array([[np.inf, 0.0], [0.0, 1.0]])
    with pytest.raises(TrainingError):
        train(net, X, one_hot([1, 2], 2), TrainConfig(epochs=3))


def test_predict_class_ties_and_base():
    net = MLP(np.zeros((1, 2)), np.zeros(1), np.zeros((3, 1)), np.zeros(3))
    assert predict_class(net, np.zeros(2)) == 1
    net.b2[:] = [0.0, 2.0, 2.0]
    assert predict_class(net, np.zeros(2)) == 2


def test_shape_checks():
    net = init_mlp(3, 2, 2)
    with pytest.raises(ValueError):
        forward(net, np.zeros(4))
    with pytest.raises(ValueError):
        mse(net, np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ValueError):
        one_hot([0, 1], 2)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_mode="online")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 5))
def test_outputs_stay_in_unit_interval(seed, hidden, out):
    net = init_mlp(4, hidden, out, seed=seed, init_scale=5.0)
    Y = forward(net, np.random.default_rng(seed).normal(scale=10, size=(6, 4)))
    assert np.all((Y >= 0) & (Y <= 1))


def test_zero_init_gives_one_half(rng):
    net = init_mlp(20, 10, 2, init_scale=0)
    assert not any(p.any() for p in net.params())
    np.testing.assert_array_equal(forward(net, rng.uniform(size=(5, 20))), 0.5)


def test_mse_by_hand():
    net = init_mlp(3, 2, 2, init_scale=0)
    assert mse(net, np.zeros((1, 3)), [[1.0, 0.0]]) == pytest.approx(0.25)
    assert mse(net, np.zeros((2, 3)), np.full((2, 2), 0.5)) == 0.0


def test_zero_learning_rate_changes_nothing(rng):
    net = init_mlp(4, 3, 2, seed=1)
    X, T = rng.uniform(size=(10, 4)), one_hot(rng.integers(1, 3, 10), 2)
    out, final = train(net, X, T, TrainConfig(learning_rate=0.0, epochs=50))
    for a, b in zip(out.params(), net.params()):
        np.testing.assert_array_equal(a, b)
    assert final == mse(net, X, T)


@pytest.mark.parametrize("seed", range(20))
def test_training_does_not_raise_mse(seed):
    r = np.random.default_rng(seed)
    X, T = r.uniform(size=(30, 20)), one_hot(r.integers(1, 3, 30), 2)
    net = init_mlp(20, 10, 2, seed=seed)
    assert train(net, X, T, TrainConfig(epochs=200))[1] <= mse(net, X, T)


def test_gradient_vanishes_when_targets_are_outputs(rng):
    net = init_mlp(5, 4, 2, seed=3)
    X = rng.uniform(size=(7, 5))
    g = gradient(net, X, forward(net, X))
    assert all(np.abs(p).max() < 1e-12 for p in g.params())


def test_gradient_of_duplicated_data(rng):
    net = init_mlp(5, 4, 2, seed=4)
    X, T = rng.uniform(size=(6, 5)), one_hot(rng.integers(1, 3, 6), 2)
    a = gradient(net, X, T)
    b = gradient(net, np.vstack([X, X]), np.vstack([T, T]))
    for p, q in zip(a.params(), b.params()):
        np.testing.assert_allclose(p, q, atol=1e-15)


def test_predict_class_examples():
    def fixed(out):
        b2 = np.log(np.asarray(out) / (1 - np.asarray(out)))
        return MLP(np.zeros((1, 2)), np.zeros(1), np.zeros((len(out), 1)), b2)

    assert predict_class(fixed([0.9, 0.1]), np.zeros(2)) == 1
    assert predict_class(fixed([0.5, 0.5]), np.zeros(2)) == 1
    assert predict_class(fixed([0.1, 0.2, 0.8, 0.3]), np.zeros(2)) == 3
