import numpy as np
import pytest

from auxtrain.errors import NumericError, ShapeError, UnsupportedActivationError
from auxtrain.fnn import (
    FnnParams,
    forward,
    get_activation,
    init_params,
    l2_error,
    load_params,
    mse_gradient,
    mse_loss,
    relative_l2,
    save_params,
)
from auxtrain.rng import SplitMix64
from oracles import assert_grad_close, central_diff


def small_params(depth=3, width=4, dim=2, activation="sin", seed=0):
    return init_params(depth, width, dim, activation, SplitMix64(seed))


class TestActivations:
    def test_relu_values_and_subgradient(self):
        act = get_activation("relu")
        z = np.array([[-2.0, 0.0, 3.0]])
        np.testing.assert_array_equal(act(z), [[0.0, 0.0, 3.0]])
        np.testing.assert_array_equal(act.deriv(z), [[0.0, 0.0, 1.0]])
        with pytest.raises(UnsupportedActivationError):
            act.second(z)

    def test_sin_derivatives(self):
        act = get_activation("sin")
        z = np.linspace(-2, 2, 7)
        np.testing.assert_allclose(act.deriv(z), np.cos(z))
        np.testing.assert_allclose(act.second(z), -np.sin(z))

    def test_unknown_activation(self):
        with pytest.raises(UnsupportedActivationError):
            get_activation("tanh")


class TestInitParams:
    def test_support_bound(self):
        p = init_params(4, 100, 3, "relu", SplitMix64(1))
        for w, b in zip(p.weights, p.biases):
            assert np.abs(w).max() <= 0.1 and np.abs(b).max() <= 0.1

    def test_same_seed_same_params(self):
        p1 = init_params(5, 7, 2, "sin", SplitMix64(11))
        p2 = init_params(5, 7, 2, "sin", SplitMix64(11))
        for a, b in zip(p1.weights, p2.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(p1.biases, p2.biases):
            np.testing.assert_array_equal(a, b)

    def test_sample_mean_near_zero(self):
        width = 10
        draws = SplitMix64(5).uniform(-(width ** -0.5), width ** -0.5, size=100000)
        tol = 3.0 * (2 * width ** -0.5) / np.sqrt(12.0 * 1e5)
        assert abs(draws.mean()) <= tol

    def test_shapes(self):
        p = init_params(4, 6, 3, "relu", SplitMix64(0))
        assert p.weights[0].shape == (6, 3)
        assert p.weights[1].shape == (6, 6)
        assert p.weights[-1].shape == (1, 6)
        assert p.biases[-1].shape == (1, 1)
        assert (p.depth, p.width, p.input_dim) == (4, 6, 3)


class TestForward:
    def test_zero_weights_constant_output(self):
        for name in ("relu", "sin"):
            p = small_params(activation=name)
            for w in p.weights:
                w[:] = 0.0
            for b in p.biases:
                b[:] = 0.0
            p.biases[-1][:] = 2.5
            out = forward(p, np.array([[0.3, -0.7], [0.1, 0.9]])).output
            np.testing.assert_array_equal(out, [[2.5, 2.5]])

    def test_hand_relu_chain(self):
        p = FnnParams(
            [np.array([[1.0]]), np.array([[1.0]])],
            [np.zeros((1, 1)), np.zeros((1, 1))],
            get_activation("relu"),
        )
        out = forward(p, np.array([[-2.0, 3.0]])).output
        np.testing.assert_array_equal(out, [[0.0, 3.0]])

    def test_trace_recursion_is_exact(self):
        p = small_params()
        x = SplitMix64(2).uniform(-1, 1, (2, 6))
        trace = forward(p, x)
        act = p.activation
        a = p.weights[0] @ x + p.biases[0]
        for l in range(p.depth - 1):
            np.testing.assert_array_equal(trace.preactivations[l], a)
            a = p.weights[l + 1] @ act(a) + p.biases[l + 1]
        np.testing.assert_array_equal(trace.output, a)

    def test_bit_identical_reevaluation(self):
        p = small_params(seed=9)
        x = SplitMix64(3).uniform(-1, 1, (2, 5))
        np.testing.assert_array_equal(forward(p, x).output, forward(p, x).output)

    def test_non_finite_intermediate_names_layer(self):
        p = small_params(activation="relu")
        p.weights[1][:] = 1e200
        p.weights[0][:] = 1e200
        with pytest.raises(NumericError, match="layer"):
            with np.errstate(over="ignore", invalid="ignore"):
                forward(p, np.array([[1e200], [0.0]]))

    def test_input_shape_check(self):
        with pytest.raises(ShapeError):
            forward(small_params(), np.ones((3, 4)))


class TestMseLoss:
    def test_zero_at_fit(self):
        p = small_params()
        x = SplitMix64(4).uniform(-1, 1, (2, 5))
        y = forward(p, x).output
        assert mse_loss(p, x, y) == 0.0

    def test_single_sample(self):
        p = small_params()
        for w in p.weights:
            w[:] = 0.0
        for b in p.biases:
            b[:] = 0.0
        p.biases[-1][:] = 2.0
        assert mse_loss(p, np.zeros((2, 1)), np.zeros((1, 1))) == 4.0

    def test_matches_loop_oracle(self):
        p = small_params(seed=6)
        x = SplitMix64(7).uniform(-1, 1, (2, 9))
        y = SplitMix64(8).uniform(-1, 1, (1, 9))
        out = forward(p, x).output
        loop = sum((float(out[0, j]) - float(y[0, j])) ** 2 for j in range(9)) / 9
        assert mse_loss(p, x, y) == pytest.approx(loop, rel=1e-12)


class TestMseGradient:
    def test_zero_at_global_minimum(self):
        p = small_params()
        x = SplitMix64(4).uniform(-1, 1, (2, 5))
        y = forward(p, x).output
        gw, gb = mse_gradient(p, x, y)
        assert all(np.all(g == 0) for g in gw) and all(np.all(g == 0) for g in gb)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed):
        p = init_params(3, 4, 2, "sin", SplitMix64(100 + seed))
        stream = SplitMix64(200 + seed)
        x = stream.uniform(-1, 1, (2, 5))
        y = stream.uniform(-1, 1, (1, 5))
        gw, gb = mse_gradient(p, x, y)
        for l in range(p.depth):
            assert_grad_close(gw[l], central_diff(lambda: mse_loss(p, x, y), p.weights[l]))
            assert_grad_close(gb[l], central_diff(lambda: mse_loss(p, x, y), p.biases[l]))

    def test_label_shift_consistent_with_fd(self):
        p = small_params(seed=3)
        stream = SplitMix64(31)
        x = stream.uniform(-1, 1, (2, 6))
        y = stream.uniform(-1, 1, (1, 6)) + 0.7
        gw, gb = mse_gradient(p, x, y)
        assert_grad_close(gb[-1], central_diff(lambda: mse_loss(p, x, y), p.biases[-1]))
        assert_grad_close(gw[0], central_diff(lambda: mse_loss(p, x, y), p.weights[0]))


class TestL2Error:
    def test_zero_at_fit(self):
        p = small_params()
        x = SplitMix64(4).uniform(-1, 1, (2, 5))
        y = forward(p, x).output
        assert l2_error(p, x, y) == 0.0

    def test_zero_output_gives_one(self):
        p = small_params()
        for w in p.weights:
            w[:] = 0.0
        for b in p.biases:
            b[:] = 0.0
        x = SplitMix64(4).uniform(-1, 1, (2, 5))
        y = SplitMix64(5).uniform(0.5, 1.0, (1, 5))
        assert l2_error(p, x, y) == 1.0

    def test_double_output_gives_one(self):
        p = small_params()
        x = SplitMix64(4).uniform(-1, 1, (2, 5))
        y = forward(p, x).output / 2.0
        assert l2_error(p, x, y) == pytest.approx(1.0, rel=1e-12)

    def test_zero_labels_rejected(self):
        with pytest.raises(ZeroDivisionError):
            relative_l2(np.ones((1, 3)), np.zeros((1, 3)))

    def test_mse_identity(self):
        p = small_params(seed=12)
        stream = SplitMix64(13)
        x = stream.uniform(-1, 1, (2, 8))
        y = stream.uniform(-1, 1, (1, 8))
        lhs = mse_loss(p, x, y)
        rhs = float((y * y).sum()) / 8 * l2_error(p, x, y) ** 2
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        p = small_params(seed=21, activation="relu")
        path = tmp_path / "params.csv"
        save_params(p, path)
        q = load_params(path)
        assert q.activation.name == "relu"
        for a, b in zip(p.weights, q.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(p.biases, q.biases):
            np.testing.assert_array_equal(a, b)

    def test_header_check(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("nonsense\n")
        with pytest.raises(ValueError):
            load_params(path)
