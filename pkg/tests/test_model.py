import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedluck.data import Dataset
from fedluck.errors import ConfigError, ShapeError
from fedluck.model import (
    ModelSpec,
    QuadraticSpec,
    evaluate,
    init_model,
    local_train,
    loss_and_gradient,
    predict,
)


def quad1():
    # f(w) = 0.5 * w^2 for a single parameter: one all-zero sample.
    return QuadraticSpec(1), Dataset(np.zeros((1, 1)), np.zeros(1, dtype=np.int64), 1)


def random_batch(rng, spec, n):
    X = rng.normal(size=(n, spec.layer_sizes[0]))
    return X, rng.integers(0, spec.n_outputs, size=n)


class TestInit:
    def test_deterministic(self):
        spec = ModelSpec((2, 2))
        assert init_model(spec, 7).tobytes() == init_model(spec, 7).tobytes()

    def test_parameter_count(self):
        spec = ModelSpec((2, 3, 2), activation="relu")
        assert spec.dim == 2 * 3 + 3 + 3 * 2 + 2 == 17
        assert init_model(spec, 0).shape == (17,)

    def test_within_bound(self):
        w = init_model(ModelSpec((1, 1)), 0)
        assert np.all(np.abs(w) <= 1.0)

    def test_bound_per_layer(self):
        spec = ModelSpec((9, 4, 16, 3))
        w = init_model(spec, 3)
        for (W, b), fan_in in zip(spec.unpack(w), spec.layer_sizes[:-1]):
            bound = 1 / math.sqrt(fan_in)
            assert np.all(np.abs(W) <= bound) and np.all(np.abs(b) <= bound)

    def test_different_seeds_differ(self):
        spec = ModelSpec((4, 4))
        assert not np.array_equal(init_model(spec, 0), init_model(spec, 1))

    @pytest.mark.parametrize("sizes", [(), (3,), (3, 0, 2)])
    def test_invalid_layers(self, sizes):
        with pytest.raises(ConfigError):
            ModelSpec(sizes)

    def test_invalid_activation(self):
        with pytest.raises(ConfigError):
            ModelSpec((2, 2), activation="gelu")


class TestLossAndGradient:
    def test_quadratic(self):
        spec, data = quad1()
        loss, grad = loss_and_gradient(np.array([1.0]), spec, data)
        assert loss == 0.5
        assert grad.tolist() == [1.0]

    def test_shape_mismatch(self):
        spec = ModelSpec((2, 3, 2))
        data = Dataset(np.zeros((4, 2)), np.zeros(4, dtype=np.int64), 2)
        with pytest.raises(ShapeError):
            loss_and_gradient(np.zeros(16), spec, data)
        with pytest.raises(ShapeError):
            spec.loss_and_gradient(np.zeros(17), np.zeros((4, 3)), np.zeros(4, dtype=np.int64))

    @pytest.mark.parametrize("activation,loss", [
        ("relu", "softmax_cross_entropy"),
        ("tanh", "softmax_cross_entropy"),
        ("tanh", "mse"),
        ("none", "mse"),
    ])
    def test_duplicated_batch_is_invariant(self, activation, loss):
        spec = ModelSpec((3, 5, 4), activation=activation, loss=loss)
        rng = np.random.default_rng(0)
        w = init_model(spec, 1)
        X, y = random_batch(rng, spec, 6)
        l1, g1 = spec.loss_and_gradient(w, X, y)
        l2, g2 = spec.loss_and_gradient(w, np.concatenate([X, X]), np.concatenate([y, y]))
        assert l2 == pytest.approx(l1, rel=1e-14)
        np.testing.assert_allclose(g2, g1, rtol=1e-13, atol=1e-16)

    def test_quadratic_gradient_is_mean_residual(self):
        rng = np.random.default_rng(2)
        spec = QuadraticSpec(5)
        X = rng.normal(size=(7, 5))
        w = rng.normal(size=5)
        loss, grad = spec.loss_and_gradient(w, X)
        np.testing.assert_allclose(grad, w - X.mean(axis=0), rtol=1e-13)
        assert loss == pytest.approx(0.5 * np.mean(np.sum((w - X) ** 2, axis=1)), rel=1e-13)


def central_difference(f, w, h=1e-6):
    g = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


@pytest.mark.parametrize("activation,loss", [
    ("tanh", "softmax_cross_entropy"),
    ("relu", "softmax_cross_entropy"),
    ("tanh", "mse"),
])
def test_gradient_matches_finite_differences(activation, loss):
    spec = ModelSpec((4, 8, 3), activation=activation, loss=loss)
    rng = np.random.default_rng(11)
    for _ in range(10):
        w = rng.normal(scale=0.7, size=spec.dim)
        X, y = random_batch(rng, spec, 5)
        _, grad = spec.loss_and_gradient(w, X, y)
        numeric = central_difference(lambda v: spec.loss_and_gradient(v, X, y)[0], w)
        scale = max(np.max(np.abs(numeric)), 1e-8)
        assert np.max(np.abs(grad - numeric)) <= 1e-4 * scale


class TestLocalTrain:
    def test_zero_steps(self):
        spec, data = quad1()
        g, loss = local_train(np.array([1.0]), spec, 0, 0.1, data, None, 0)
        assert g.tolist() == [0.0]
        assert loss == 0.5

    @pytest.mark.parametrize("k,expected", [(1, 0.1), (2, 0.19)])
    def test_quadratic_examples(self, k, expected):
        spec, data = quad1()
        g, _ = local_train(np.array([1.0]), spec, k, 0.1, data, None, 0)
        assert g[0] == pytest.approx(expected, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(
        k=st.integers(0, 40),
        eta=st.floats(0.001, 1.0),
        w0=st.lists(st.floats(-10, 10), min_size=1, max_size=4),
    )
    def test_quadratic_closed_form(self, k, eta, w0):
        w0 = np.array(w0)
        spec = QuadraticSpec(w0.size)
        data = Dataset(np.zeros((3, w0.size)), np.zeros(3, dtype=np.int64), 1)
        g, _ = local_train(w0, spec, k, eta, data, None, 0)
        np.testing.assert_allclose(g, w0 * (1 - (1 - eta) ** k), rtol=1e-12, atol=1e-12)

    def test_negative_steps(self):
        spec, data = quad1()
        with pytest.raises(ValueError):
            local_train(np.array([1.0]), spec, -1, 0.1, data, None, 0)

    def test_does_not_mutate_input(self):
        spec, data = quad1()
        w0 = np.array([1.0])
        local_train(w0, spec, 3, 0.1, data, None, 0)
        assert w0.tolist() == [1.0]

    def test_minibatch_reproducible(self):
        rng = np.random.default_rng(0)
        spec = ModelSpec((3, 4, 2))
        X = rng.normal(size=(20, 3))
        data = Dataset(X, rng.integers(0, 2, 20), 2)
        w0 = init_model(spec, 0)
        a, la = local_train(w0, spec, 5, 0.1, data, 4, np.random.default_rng(9))
        b, lb = local_train(w0, spec, 5, 0.1, data, 4, np.random.default_rng(9))
        assert a.tobytes() == b.tobytes() and la == lb

    def test_momentum_closed_form(self):
        # Heavy ball on f(w) = w^2/2: v <- m v + w; w <- w - eta v.
        spec, data = quad1()
        w, v, eta, m = 1.0, 0.0, 0.1, 0.9
        for _ in range(3):
            v = m * v + w
            w = w - eta * v
        g, _ = local_train(np.array([1.0]), spec, 3, eta, data, None, 0, momentum=m)
        assert g[0] == pytest.approx(1.0 - w, abs=1e-15)

    def test_prox_pulls_toward_start(self):
        spec, data = quad1()
        plain, _ = local_train(np.array([1.0]), spec, 5, 0.1, data, None, 0)
        prox, _ = local_train(np.array([1.0]), spec, 5, 0.1, data, None, 0, prox=1.0)
        assert 0 < prox[0] < plain[0]


class TestEvaluate:
    def test_perfect_model(self):
        # Identity linear layer: the true class has the largest score.
        spec = ModelSpec((3, 3), activation="none")
        w = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
        X = np.eye(3) * 5
        acc, _ = evaluate(w, spec, Dataset(X, np.array([0, 1, 2]), 3))
        assert acc == 1.0

    def test_uniform_logits_tie_rule(self):
        spec = ModelSpec((2, 2))
        labels = np.array([0, 0, 0, 1, 1, 1, 0, 1])
        data = Dataset(np.ones((8, 2)), labels, 2)
        acc, loss = evaluate(np.zeros(spec.dim), spec, data)
        assert acc == np.mean(labels == 0) == 0.5
        assert loss == pytest.approx(math.log(2))

    def test_tie_prefers_lowest_class(self):
        spec = ModelSpec((1, 4), activation="none")
        w = np.zeros(spec.dim)
        w[4:] = [0.0, 2.0, 2.0, 1.0]
        assert predict(w, spec, np.zeros((1, 1))).tolist() == [1]

    def test_matches_per_sample_loop(self):
        rng = np.random.default_rng(5)
        spec = ModelSpec((4, 6, 3))
        w = rng.normal(size=spec.dim)
        X = rng.normal(size=(50, 4))
        y = rng.integers(0, 3, 50)
        acc, _ = evaluate(w, spec, Dataset(X, y, 3))
        correct = 0
        for x, label in zip(X, y):
            h = x
            layers = spec.unpack(w)
            for i, (W, b) in enumerate(layers):
                h = h @ W + b
                if i < len(layers) - 1:
                    h = np.maximum(h, 0.0)
            best = 0
            for c in range(1, len(h)):
                if h[c] > h[best]:
                    best = c
            correct += best == label
        assert acc == correct / 50

    def test_quadratic_has_no_accuracy(self):
        spec = QuadraticSpec(2)
        acc, loss = evaluate(np.array([1.0, 0.0]), spec, Dataset(np.zeros((2, 2)), np.zeros(2, dtype=np.int64), 1))
        assert math.isnan(acc) and loss == 0.5

    def test_shape_mismatch(self):
        spec = ModelSpec((2, 2))
        with pytest.raises(ShapeError):
            evaluate(np.zeros(5), spec, Dataset(np.zeros((2, 2)), np.zeros(2, dtype=np.int64), 2))
