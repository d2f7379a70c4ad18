import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from blindofdm.nn import (
    AdamState,
    ReluNetwork,
    TrainConfig,
    TrainingDivergedError,
    adam_step,
    dataset_loss,
    fit,
    forward,
    gradients,
    init_network,
    load_checkpoint,
    loss,
    save_checkpoint,
    sign_product_output,
    train_step,
)


def tiny(seed=0, preset="all", width=8, hidden=2, d_x=5, d_y=4):
    return init_network(width, d_x, d_y, hidden, np.random.default_rng(seed), preset)


def kink_distance(net, x):
    _, cache = forward(net, x)
    pre = [a @ w.T for a, w in zip(cache.acts[:-1], net.weights[:-1])]
    return min(np.min(np.abs(p)) for p in pre)


def finite_difference(net, x, y, k, h=1e-6):
    g = np.zeros_like(net.weights[k])
    for idx in np.ndindex(g.shape):
        orig = net.weights[k][idx]
        net.weights[k][idx] = orig + h
        up = loss(forward(net, x)[0], y)
        net.weights[k][idx] = orig - h
        down = loss(forward(net, x)[0], y)
        net.weights[k][idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


class TestInit:
    def test_variances(self):
        net = init_network(512, 65, 2048, 1, np.random.default_rng(0))
        assert abs(net.weights[0].var() / (2 / 512) - 1) < 0.05
        assert abs(net.weights[1].var() / (2 / 512) - 1) < 0.05
        assert abs(net.weights[2].var() / (1 / 2048) - 1) < 0.05

    def test_deterministic(self):
        a, b = tiny(3), tiny(3)
        for wa, wb in zip(a.weights, b.weights):
            assert_array_equal(wa, wb)

    def test_presets(self):
        assert tiny(preset="hidden_only").trainable == [False, True, True, False]
        with pytest.raises(ValueError):
            tiny(preset="odd")

    def test_shape_chain_checked(self):
        with pytest.raises(ValueError):
            ReluNetwork([np.zeros((3, 2)), np.zeros((4, 4))], [True, True])


class TestForward:
    def test_zero_network(self):
        net = tiny()
        net.weights = [np.zeros_like(w) for w in net.weights]
        assert_array_equal(forward(net, np.ones(5))[0], 0)

    def test_zero_input(self):
        assert_array_equal(forward(tiny(), np.zeros(5))[0], 0)

    def test_sign_matrix_product_form(self):
        for seed in range(10):
            net = tiny(seed, width=16, hidden=3)
            x = np.random.default_rng(seed + 100).standard_normal(5)
            assert_allclose(sign_product_output(net, x), forward(net, x)[0], atol=1e-10)

    def test_masks(self):
        net = tiny(1)
        x = np.random.default_rng(1).standard_normal((6, 5))
        _, cache = forward(net, x)
        pre = x @ net.weights[0].T
        assert_array_equal(cache.masks[0], pre >= 0)

    @given(st.floats(1e-3, 1e3), st.integers(0, 1000))
    def test_positive_homogeneity(self, c, seed):
        net = tiny(seed % 7)
        x = np.random.default_rng(seed).standard_normal(5)
        out, cache = forward(net, x)
        out_c, cache_c = forward(net, c * x)
        assert_allclose(out_c, c * out, rtol=1e-10, atol=1e-12)
        for a, b in zip(cache.acts[1:], cache_c.acts[1:]):
            assert_allclose(b, c * a, rtol=1e-10, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            forward(tiny(), np.ones(6))


class TestGradients:
    def test_against_finite_differences(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 20:
            net = tiny(int(rng.integers(1 << 30)))
            x = rng.standard_normal((3, 5))
            y = rng.standard_normal((3, 4))
            if kink_distance(net, x) < 1e-4:
                continue
            out, cache = forward(net, x)
            grads = gradients(net, cache, out - y, all_layers=True)
            for k, g in enumerate(grads):
                fd = finite_difference(net, x, y, k)
                rel = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)
                assert rel < 1e-5, (checked, k, rel)
            checked += 1

    def test_frozen_layers_get_no_gradient(self):
        net = tiny(preset="hidden_only")
        out, cache = forward(net, np.ones((2, 5)))
        g = gradients(net, cache, out)
        assert g[0] is None and g[-1] is None and g[1] is not None


class TestTrainStep:
    def test_zero_error_zero_update(self):
        net = tiny(2)
        x = np.random.default_rng(0).standard_normal((4, 5))
        y = forward(net, x)[0]
        before = [w.copy() for w in net.weights]
        cfg = TrainConfig(optimizer="sgd_momentum", momentum=0.0, learning_rate=0.1)
        velocity = [np.zeros_like(w) for w in net.weights]
        batch_loss, _ = train_step(net, x, y, cfg, velocity)
        assert batch_loss == 0
        for a, b in zip(before, net.weights):
            assert_array_equal(a, b)

    @pytest.mark.parametrize("optimizer", ["adam", "sgd_momentum"])
    def test_frozen_layers_bit_unchanged(self, optimizer):
        from blindofdm.nn import init_optimizer

        net = tiny(3, preset="hidden_only")
        cfg = TrainConfig(optimizer=optimizer, learning_rate=0.01)
        state = init_optimizer(net, cfg)
        a0, b0 = net.weights[0].copy(), net.weights[-1].copy()
        w1 = net.weights[1].copy()
        rng = np.random.default_rng(0)
        for _ in range(5):
            _, state = train_step(net, rng.standard_normal((4, 5)), rng.standard_normal((4, 4)), cfg, state)
        assert_array_equal(net.weights[0], a0)
        assert_array_equal(net.weights[-1], b0)
        assert not np.array_equal(net.weights[1], w1)

    def test_plain_sgd_monotone(self):
        from blindofdm.nn import init_optimizer

        net = tiny(5)
        rng = np.random.default_rng(5)
        x, y = rng.standard_normal((16, 5)), rng.standard_normal((16, 4))
        cfg = TrainConfig(optimizer="sgd_momentum", momentum=0.0, learning_rate=1e-4)
        state = init_optimizer(net, cfg)
        losses = []
        for _ in range(50):
            batch_loss, state = train_step(net, x, y, cfg, state)
            losses.append(batch_loss)
        assert np.all(np.diff(losses) <= 1e-15)
        assert losses[-1] < losses[0]

    def test_momentum_rule(self):
        from blindofdm.nn import momentum_step

        v = momentum_step([np.array([1.0])], [np.array([2.0])], lr=0.1, momentum=0.5)
        assert_allclose(v[0], [0.5 - 0.2])

    def test_divergence_detected(self):
        from blindofdm.nn import init_optimizer

        net = tiny()
        cfg = TrainConfig()
        with pytest.raises(TrainingDivergedError):
            train_step(net, np.full((1, 5), np.nan), np.zeros((1, 4)), cfg, init_optimizer(net, cfg))


class TestAdam:
    def test_two_step_hand_trace(self):
        state = AdamState([np.zeros(1)], [np.zeros(1)], 0)
        state, (u1,) = adam_step(state, [np.array([1.0])], 0.1)
        state, (u2,) = adam_step(state, [np.array([0.5])], 0.1)
        assert u1[0] == pytest.approx(-0.09999999900000001, rel=1e-14)
        assert u2[0] == pytest.approx(-0.09321796270183958209, rel=1e-13)
        assert state.step == 2

    def test_zero_gradient(self):
        state = AdamState([np.zeros(3)], [np.zeros(3)], 0)
        _, (u,) = adam_step(state, [np.zeros(3)], 0.01)
        assert_array_equal(u, 0)

    def test_constant_gradient_step_size(self):
        state = AdamState([np.zeros(2)], [np.zeros(2)], 0)
        for _ in range(500):
            state, (u,) = adam_step(state, [np.array([3.0, -0.02])], 0.01)
        assert_allclose(u, [-0.01, 0.01], rtol=1e-5)


class TestFit:
    def test_memorizes_one_sample(self):
        net = init_network(32, 5, 4, 1, np.random.default_rng(0))
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal((1, 5)), rng.standard_normal((1, 4))
        cfg = TrainConfig(learning_rate=1e-2, batch_size=1, max_epochs=2000, early_stop_patience=10**6,
                          lr_reduce_patience=10**6)
        report = fit(net, x, y, x, y, cfg)
        assert report.best_val_loss < 1e-4
        assert dataset_loss(net, x, y) < 1e-4

    def test_plateau_schedule_and_restore(self):
        net = tiny(4)
        initial = [w.copy() for w in net.weights]
        rng = np.random.default_rng(2)
        x, y = rng.standard_normal((20, 5)), rng.standard_normal((20, 4))
        # validation targets mirrored through the initial outputs: every step
        # toward the training targets moves away from them
        mirrored = 2 * forward(net, x)[0] - y
        cfg = TrainConfig(learning_rate=1e-2, batch_size=5, max_epochs=10, early_stop_patience=3,
                          lr_reduce_patience=1)
        report = fit(net, x, y, x, mirrored, cfg)
        assert report.stopped_epoch == 3
        assert report.best_epoch == 0
        assert_allclose([h["lr"] for h in report.history], [1e-2, 1e-3, 1e-4])
        for a, b in zip(initial, net.weights):
            assert_array_equal(a, b)

    def test_history_and_drift(self):
        net = tiny(6)
        rng = np.random.default_rng(3)
        x, y = rng.standard_normal((30, 5)), rng.standard_normal((30, 4))
        report = fit(net, x[:20], y[:20], x[20:], y[20:], TrainConfig(max_epochs=4, batch_size=5))
        assert [h["epoch"] for h in report.history] == list(range(1, report.stopped_epoch + 1))
        drift = [h["weight_drift"] for h in report.history]
        assert all(np.isfinite(drift)) and drift[0] > 0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            fit(tiny(), np.zeros((0, 5)), np.zeros((0, 4)), np.zeros((1, 5)), np.zeros((1, 4)), TrainConfig())


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        from blindofdm.nn import init_optimizer

        net = tiny(7, preset="hidden_only")
        rng = np.random.default_rng(7)
        x, y = rng.standard_normal((30, 5)), rng.standard_normal((30, 4))
        report = fit(net, x[:20], y[:20], x[20:], y[20:], TrainConfig(max_epochs=3, batch_size=5))
        state = init_optimizer(net, TrainConfig())
        save_checkpoint(tmp_path / "c.npz", net, report, "abc", state)
        back, header, st_back = load_checkpoint(tmp_path / "c.npz")
        assert back.trainable == net.trainable
        assert header["config_hash"] == "abc"
        assert dataset_loss(back, x[20:], y[20:]) == report.best_val_loss
        assert isinstance(st_back, AdamState)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(optimizer="rmsprop")
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0)
        with pytest.raises(ValueError):
            TrainConfig(momentum=1.0)
