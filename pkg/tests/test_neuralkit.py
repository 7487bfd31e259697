"""Network kernel checks: forward identities, gradients against central
finite differences on 64-bit shadow weights, and training behavior."""

import numpy as np
import pytest

from pnmf import neuralkit as nk
from pnmf.errors import ShapeError, StateError, TrainingDiverged


def fd_param_gradient(model, x, y, loss, h=1e-3):
    """Central finite differences on a float64 copy of the weights."""
    theta = np.asarray(model.weights, dtype=np.float64).copy()

    def total_loss(t):
        if loss == "cross_entropy":
            logits = nk.forward(model, x, weights=t, stop_before_softmax=True)
            return float(nk.cross_entropy_from_logits(logits, y).mean())
        out = nk.forward(model, x, weights=t)
        return float(np.mean((out - y) ** 2))

    grad = np.zeros_like(theta)
    for i in range(theta.size):
        tp = theta.copy()
        tm = theta.copy()
        tp[i] += h
        tm[i] -= h
        grad[i] = (total_loss(tp) - total_loss(tm)) / (2 * h)
    return grad


def fd_input_gradient(model, x, y, loss, h=1e-4):
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)

    def sample_loss(xi, yi):
        if loss == "cross_entropy":
            logits = nk.forward(model, xi.reshape(1, -1), stop_before_softmax=True)
            return float(nk.cross_entropy_from_logits(logits, [yi])[0])
        out = nk.forward(model, xi.reshape(1, -1))
        return float(np.mean((out[0] - yi) ** 2))

    for n in range(x.shape[0]):
        yi = y[n]
        for i in range(x.shape[1]):
            xp = x[n].copy()
            xm = x[n].copy()
            xp[i] += h
            xm[i] -= h
            grad[n, i] = (sample_loss(xp, yi) - sample_loss(xm, yi)) / (2 * h)
    return grad


def random_stack(rng):
    """Small random stack mixing all five layer kinds, <= 500 params."""
    m = int(rng.integers(4, 9))
    use_conv = rng.random() < 0.5
    layers = []
    if use_conv:
        c_out = int(rng.integers(2, 4))
        k = int(rng.integers(2, 4))
        conv = nk.conv1d(1, c_out, k, 1, m)
        layers += [conv, nk.relu(conv.out_dim), nk.flatten(conv.out_dim)]
        width = conv.out_dim
    else:
        width = m
    hidden = int(rng.integers(3, 8))
    layers += [nk.dense(width, hidden), nk.relu(hidden), nk.dense(hidden, 2), nk.softmax(2)]
    return m, layers


def relu_kink_margin(model, x):
    """Smallest |pre-activation| feeding any relu.

    Finite differences are invalid within h of a relu kink, so gradient
    fixtures are redrawn until every unit has margin.
    """
    cache = []
    nk.forward(model, x, cache=cache)
    margin = np.inf
    for layer, inp in zip(model.layers, cache):
        if layer.kind == "relu":
            margin = min(margin, float(np.min(np.abs(inp))))
    return margin


def draw_checkable_net(seed):
    """Random (model, x, y) whose relu inputs sit > 5e-3 from the kink."""
    for attempt in range(100):
        rng = np.random.default_rng(seed * 1000 + attempt)
        m, layers = random_stack(rng)
        model = nk.init_model(layers, seed=seed * 1000 + attempt)
        x = rng.random((4, m))
        y = rng.integers(0, 2, 4)
        if relu_kink_margin(model, x) > 5e-3:
            return model, x, y
    raise AssertionError("could not draw a kink-free fixture")


class TestForward:
    def test_zero_dense_gives_zero(self):
        model = nk.NetModel([nk.dense(3, 2)], np.zeros(8, dtype=np.float32))
        out = nk.forward(model, np.ones((4, 3)))
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_softmax_symmetry(self):
        model = nk.NetModel([nk.softmax(2)], np.zeros(0, dtype=np.float32))
        out = nk.forward(model, np.zeros((1, 2)))
        np.testing.assert_allclose(out, [[0.5, 0.5]])

    def test_conv_delta_kernel_is_identity(self):
        conv = nk.conv1d(1, 1, 1, 1, 6)
        model = nk.NetModel([conv], np.array([1.0, 0.0], dtype=np.float32))
        x = np.random.default_rng(0).random((3, 6))
        np.testing.assert_allclose(nk.forward(model, x), x)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        m, layers = random_stack(rng)
        model = nk.init_model(layers, seed=0)
        out = nk.forward(model, rng.random((5, m)))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)

    def test_input_dim_checked(self):
        model = nk.init_model([nk.dense(4, 2)], seed=0)
        with pytest.raises(ShapeError):
            nk.forward(model, np.ones((2, 5)))


class TestBackward:
    @pytest.mark.parametrize("seed", range(12))
    def test_param_gradient_matches_fd(self, seed):
        model, x, y = draw_checkable_net(seed)
        assert nk.total_params(model.layers) <= 500
        _, grad = nk._batch_loss_and_grad(
            model, np.asarray(model.weights, np.float64), x, y, "cross_entropy"
        )
        fd = fd_param_gradient(model, x, y, "cross_entropy")
        scale = np.maximum(np.abs(fd), 1e-3)
        assert np.max(np.abs(grad - fd) / scale) < 1e-4

    def test_mse_param_gradient_matches_fd(self):
        rng = np.random.default_rng(100)
        layers = [nk.dense(4, 5), nk.relu(5), nk.dense(5, 4)]
        model = nk.init_model(layers, seed=1)
        x = rng.random((3, 4))
        y = rng.random((3, 4))
        _, grad = nk._batch_loss_and_grad(
            model, np.asarray(model.weights, np.float64), x, y, "mse"
        )
        fd = fd_param_gradient(model, x, y, "mse")
        scale = np.maximum(np.abs(fd), 1e-3)
        assert np.max(np.abs(grad - fd) / scale) < 1e-4

    def test_zero_upstream_zero_grad(self):
        model = nk.init_model([nk.dense(3, 2)], seed=2)
        cache = []
        out = nk.forward(model, np.ones((2, 3)), cache=cache)
        grad, gin = nk.backward(model, cache, np.zeros_like(out))
        assert not grad.any()
        assert not gin.any()

    def test_softmax_ce_combined_gradient(self):
        # d(CE)/d(logits) = p - onehot
        logits = np.array([[2.0, -1.0], [0.5, 0.5]])
        y = np.array([0, 1])
        g = nk._ce_grad_at_logits(logits, y)
        p = nk._softmax_rows(logits)
        expect = p.copy()
        expect[np.arange(2), y] -= 1
        np.testing.assert_allclose(g, expect, rtol=1e-12)

    def test_missing_cache_raises(self):
        model = nk.init_model([nk.dense(2, 2)], seed=3)
        with pytest.raises(StateError):
            nk.backward(model, [], np.zeros((1, 2)))


class TestInputGradient:
    def test_constant_model_zero_gradient(self):
        model = nk.NetModel([nk.dense(3, 2)], np.zeros(8, dtype=np.float32))
        g = nk.input_gradient(model, np.random.default_rng(0).random((4, 3)), "cross_entropy", [0, 1, 0, 1])
        np.testing.assert_allclose(g, 0.0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_fd_on_random_inputs(self, seed):
        rng = np.random.default_rng(seed + 50)
        layers = [nk.dense(15, 6), nk.relu(6), nk.dense(6, 2), nk.softmax(2)]
        model = nk.init_model(layers, seed=seed)
        x = rng.random((3, 15))
        y = rng.integers(0, 2, 3)
        g = nk.input_gradient(model, x, "cross_entropy", y)
        fd = fd_input_gradient(model, x, y, "cross_entropy")
        scale = np.maximum(np.abs(fd), 1e-3)
        assert np.max(np.abs(g - fd) / scale) < 1e-4

    def test_mse_identity_analytic(self):
        # MSE(x, x0) w.r.t. x through an identity net = 2(x - x0)/n
        dim = 5
        w = np.zeros(dim * dim + dim)
        w[: dim * dim] = np.eye(dim).ravel()
        model = nk.NetModel([nk.dense(dim, dim)], w.astype(np.float32))
        x = np.random.default_rng(4).random((2, dim))
        x0 = np.random.default_rng(5).random((2, dim))
        g = nk.input_gradient(model, x, "mse", x0)
        np.testing.assert_allclose(g, 2 * (x - x0) / dim, rtol=1e-6)


class TestTrain:
    def test_zero_learning_rate_keeps_weights(self):
        rng = np.random.default_rng(6)
        model = nk.init_model([nk.dense(3, 2), nk.softmax(2)], seed=4)
        cfg = nk.TrainConfig(learning_rate=0.0, epochs=3, batch_size=4, seed=0)
        trained, _ = nk.train(model, rng.random((8, 3)), rng.integers(0, 2, 8), "cross_entropy", cfg)
        np.testing.assert_array_equal(trained.weights, model.weights)

    def test_linearly_separable_converges(self):
        rng = np.random.default_rng(7)
        n = 40
        y = np.array([0] * (n // 2) + [1] * (n // 2))
        x = rng.normal(0, 0.3, (n, 2)) + np.stack([y * 2.0 - 1.0, y * 2.0 - 1.0], axis=1)
        model = nk.init_model([nk.dense(2, 2), nk.softmax(2)], seed=5)
        cfg = nk.TrainConfig(learning_rate=0.05, epochs=200, batch_size=8, seed=1)
        trained, log = nk.train(model, x, y, "cross_entropy", cfg)
        logits = nk.forward(trained, x, stop_before_softmax=True)
        assert np.mean(np.argmax(logits, axis=1) == y) == 1.0

    def test_identity_regression_fit(self):
        rng = np.random.default_rng(8)
        x = rng.random((64, 4))
        model = nk.init_model([nk.dense(4, 4)], seed=6)
        cfg = nk.TrainConfig(learning_rate=0.01, epochs=300, batch_size=16, seed=2)
        trained, _ = nk.train(model, x, x, "mse", cfg)
        out = nk.forward(trained, x)
        assert np.mean((out - x) ** 2) < 1e-3

    def test_bit_deterministic(self):
        rng = np.random.default_rng(9)
        x = rng.random((20, 3))
        y = rng.integers(0, 2, 20)
        cfg = nk.TrainConfig(learning_rate=1e-3, epochs=5, batch_size=4, seed=3)
        t1, _ = nk.train(nk.init_model([nk.dense(3, 2), nk.softmax(2)], seed=7), x, y, "cross_entropy", cfg)
        t2, _ = nk.train(nk.init_model([nk.dense(3, 2), nk.softmax(2)], seed=7), x, y, "cross_entropy", cfg)
        assert t1.weights.tobytes() == t2.weights.tobytes()

    def test_divergence_detected(self):
        x = np.full((8, 2), 1e200)  # squared residuals overflow at the first batch
        y = np.zeros((8, 1))
        model = nk.init_model([nk.dense(2, 1)], seed=8)
        cfg = nk.TrainConfig(learning_rate=1e-3, epochs=2, batch_size=4, seed=4)
        with pytest.raises(TrainingDiverged) as exc:
            nk.train(model, x, y, "mse", cfg)
        assert exc.value.iteration == 0

    def test_best_val_checkpoint_is_max(self):
        rng = np.random.default_rng(11)
        x = rng.normal(0, 1, (30, 3))
        y = rng.integers(0, 2, 30)
        xv = rng.normal(0, 1, (12, 3))
        yv = rng.integers(0, 2, 12)
        model = nk.init_model([nk.dense(3, 2), nk.softmax(2)], seed=9)
        cfg = nk.TrainConfig(learning_rate=0.05, epochs=20, batch_size=8, seed=5)
        trained, log = nk.train(model, x, y, "cross_entropy", cfg, val_data=xv, val_targets=yv)
        best = max(log.epoch_val_metric)
        logits = nk.forward(trained, xv, stop_before_softmax=True)
        acc = np.mean(np.argmax(logits, axis=1) == yv)
        assert acc == pytest.approx(best)


class TestSerialization:
    def test_roundtrip(self, tmp_path):
        layers = [nk.dense(4, 3), nk.relu(3), nk.dense(3, 2), nk.softmax(2)]
        model = nk.init_model(layers, seed=10)
        nk.save_architecture(model, tmp_path / "arch.json")
        back = nk.load_architecture(tmp_path / "arch.json", model.weights)
        x = np.random.default_rng(12).random((3, 4))
        np.testing.assert_array_equal(nk.forward(back, x), nk.forward(model, x))

    def test_weight_count_checked(self, tmp_path):
        model = nk.init_model([nk.dense(4, 3)], seed=11)
        nk.save_architecture(model, tmp_path / "arch.json")
        with pytest.raises(ShapeError):
            nk.load_architecture(tmp_path / "arch.json", model.weights[:-1])
