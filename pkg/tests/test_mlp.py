"""Network engine: gradients, convergence, determinism, persistence."""

import numpy as np
import pytest

from payloadcal.mlp import (
    TAG_BASE,
    TAG_CALIB,
    TAG_WE,
    MlpModel,
    ModelError,
    TrainConfig,
    base_architecture,
    calib_architecture,
    init_model,
    load_model,
    numeric_gradient,
    save_model,
    train,
    we_architecture,
)

ARCHITECTURES = {
    TAG_BASE: lambda: base_architecture(24, width=8),
    TAG_CALIB: lambda: calib_architecture(24, width=8),
    TAG_WE: lambda: we_architecture(6, width=8),
}


def max_relative_error(analytic, numeric):
    """Per-tensor infinity-norm error relative to the gradient magnitude."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.max(np.abs(a)), np.max(np.abs(n)), 1e-12)
        worst = max(worst, float(np.max(np.abs(a - n)) / scale))
    return worst


class TestGradients:
    @pytest.mark.parametrize("tag", sorted(ARCHITECTURES))
    def test_backprop_matches_finite_differences(self, tag, rng):
        model = ARCHITECTURES[tag]()
        x = rng.normal(size=(7, model.sizes[0]))
        y = rng.normal(size=(7, model.sizes[-1]))
        out, cache = model._forward_cached(x, False, 0.0, None)
        grad_out = 2.0 * (out - y) / out.size
        gw, gb = model.backward(x, cache, grad_out)
        nw, nb = numeric_gradient(model, x, y)
        assert max_relative_error(gw + gb, nw + nb) < 1e-6

    def test_residual_path_carries_gradient(self, rng):
        """Zeroing the middle layers of the residual network still leaves a
        gradient on layer 1 through the skip connections."""
        model = base_architecture(10, width=6)
        for k in (1, 2, 3):  # kill the direct path after layer 1
            model.weights[k][:] = 0.0
            model.biases[k][:] = -1.0  # ReLU dead
        x = rng.normal(size=(4, 10))
        y = rng.normal(size=(4, 6))
        out, cache = model._forward_cached(x, False, 0.0, None)
        gw, _ = model.backward(x, cache, 2.0 * (out - y) / out.size)
        assert np.max(np.abs(gw[0])) > 0.0


class TestForward:
    def test_residual_adds_layer_outputs(self, rng):
        model = calib_architecture(4, width=5)
        plain = model.forward(rng.normal(size=(3, 4)))
        assert plain.shape == (3, 6)

    def test_wrong_input_width_rejected(self):
        model = calib_architecture(4, width=5)
        with pytest.raises(ModelError):
            model.forward(np.zeros((2, 7)))

    def test_residual_width_mismatch_rejected(self):
        with pytest.raises(ModelError):
            init_model([4, 5, 6, 2], seed=0, residual=[(1, 2)]).validate()

    def test_dropout_needs_rng(self):
        model = calib_architecture(4, width=5)
        with pytest.raises(ModelError):
            model.forward(np.zeros((2, 4)), train_mode=True, dropout=0.5)

    def test_dropout_preserves_expectation(self, rng):
        """With one hidden layer the output is linear in the dropout mask,
        so the inverted scaling keeps the expected output unchanged."""
        model = init_model([4, 64, 2], seed=0)
        x = rng.normal(size=(1, 4))
        clean = model.forward(x)
        outs = [
            model.forward(x, train_mode=True, dropout=0.3,
                          rng=np.random.default_rng(k))
            for k in range(4000)
        ]
        assert np.allclose(np.mean(outs, axis=0), clean, atol=0.05)


class TestTraining:
    def test_linear_model_converges_to_least_squares(self, rng):
        """A no-hidden-layer model on a linear target reaches the analytic
        optimum, an oracle with a closed-form answer."""
        w_true = rng.normal(size=(3, 2))
        x = rng.normal(size=(400, 3))
        y = x @ w_true + 0.5
        model = init_model([3, 2], seed=1)
        cfg = TrainConfig(lr=0.05, batch_size=400, dropout=0.0, epochs=800, seed=0)
        train(model, x, y, cfg)
        pred = model.predict(x)
        assert float(np.mean((pred - y) ** 2)) < 1e-8

    def test_deterministic_given_seed(self, rng):
        x = rng.normal(size=(100, 5))
        y = rng.normal(size=(100, 6))
        runs = []
        for _ in range(2):
            model = calib_architecture(5, width=8, seed=3)
            cfg = TrainConfig(lr=1e-3, batch_size=32, dropout=0.2, epochs=3, seed=7)
            train(model, x, y, cfg)
            runs.append([w.copy() for w in model.weights])
        for w1, w2 in zip(*runs):
            assert np.array_equal(w1, w2)

    def test_loss_decreases(self, rng):
        x = rng.normal(size=(200, 4))
        y = np.tanh(x @ rng.normal(size=(4, 6)))
        model = calib_architecture(4, width=16, seed=0)
        cfg = TrainConfig(lr=1e-3, batch_size=64, dropout=0.0, epochs=30, seed=0)
        history = train(model, x, y, cfg)
        assert history[-1] < 0.5 * history[0]

    def test_nonfinite_loss_raises(self, rng):
        x = rng.normal(size=(10, 3))
        y = rng.normal(size=(10, 2))
        model = init_model([3, 2], seed=0)
        model.weights[0][:] = 1e200
        cfg = TrainConfig(lr=1.0, batch_size=10, dropout=0.0, epochs=1, seed=0)
        with np.errstate(over="ignore"), pytest.raises(ModelError):
            train(model, x, y, cfg, normalize=False)

    def test_empty_dataset_rejected(self):
        model = init_model([3, 2], seed=0)
        with pytest.raises(ModelError):
            train(model, np.zeros((0, 3)), np.zeros((0, 2)), TrainConfig())

    def test_bad_config_rejected(self):
        with pytest.raises(ModelError):
            TrainConfig(dropout=1.0)
        with pytest.raises(ModelError):
            TrainConfig(batch_size=0)


class TestPersistence:
    def test_round_trip_all_architectures(self, tmp_path, rng):
        for tag, make in ARCHITECTURES.items():
            model = make()
            model.set_normalization(
                rng.normal(size=model.sizes[0]),
                np.abs(rng.normal(size=model.sizes[0])) + 0.1,
                rng.normal(size=model.sizes[-1]),
                np.abs(rng.normal(size=model.sizes[-1])) + 0.1,
            )
            path = tmp_path / f"{tag}.mlp"
            save_model(model, path)
            back = load_model(path, expect_tag=tag)
            x = rng.normal(size=(5, model.sizes[0]))
            assert np.array_equal(back.predict(x), model.predict(x))
            assert back.residual == model.residual

    def test_tag_mismatch_rejected(self, tmp_path):
        path = tmp_path / "m.mlp"
        save_model(calib_architecture(4, width=5), path)
        with pytest.raises(ModelError):
            load_model(path, expect_tag=TAG_BASE)

    def test_corruption_detected(self, tmp_path):
        path = tmp_path / "m.mlp"
        save_model(calib_architecture(4, width=5), path)
        blob = bytearray(path.read_bytes())
        blob[-7] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelError):
            load_model(path)

    def test_not_a_model_file(self, tmp_path):
        path = tmp_path / "m.mlp"
        path.write_bytes(b"hello world, definitely not a model")
        with pytest.raises(ModelError):
            load_model(path)

    def test_byte_identical_saves(self, tmp_path):
        p1, p2 = tmp_path / "a.mlp", tmp_path / "b.mlp"
        save_model(calib_architecture(4, width=5, seed=9), p1)
        save_model(calib_architecture(4, width=5, seed=9), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestInit:
    def test_deterministic(self):
        m1 = init_model([3, 4, 2], seed=5)
        m2 = init_model([3, 4, 2], seed=5)
        for w1, w2 in zip(m1.weights, m2.weights):
            assert np.array_equal(w1, w2)

    def test_bad_sizes_rejected(self):
        with pytest.raises(ModelError):
            init_model([3], seed=0)
        with pytest.raises(ModelError):
            init_model([3, 0, 2], seed=0)

    def test_base_architecture_shape(self):
        model = base_architecture(24, width=16)
        assert model.sizes == [24, 16, 16, 16, 16, 16, 6]
        assert model.residual == [(1, 3), (3, 5)]
        assert model.tag == TAG_BASE
