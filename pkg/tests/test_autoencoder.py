import numpy as np
import pytest

from lkfs.autoencoder import (
    AeArchitecture,
    AeHyperparams,
    encode,
    forward,
    gradient_check,
    init_model,
    load_model,
    loss_mse,
    loss_regularized,
    max_relative_error,
    numerical_gradients,
    parameter_gradients,
    save_model,
    train,
    weight_penalty,
)
from lkfs.dataio import ExpressionMatrix, generate_synthetic, minmax_scale
from lkfs.errors import ConfigError, DataValidationError

TINY = AeArchitecture(encoder_layers=(6, 4, 2), decoder_layers=(2, 4, 6), latent_dim=2)


def tiny_batch(seed=0, rows=4):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.05, 0.95, size=(rows, 6))


class TestArchitecture:
    def test_default_sizes(self):
        arch = AeArchitecture.default(8820)
        assert arch.encoder_layers == (8820, 200, 100, 50)
        assert arch.decoder_layers == (50, 100, 200, 8820)
        assert arch.latent_dim == 50

    def test_inconsistent_latent_rejected(self):
        with pytest.raises(ConfigError):
            AeArchitecture(encoder_layers=(6, 4, 3), decoder_layers=(2, 4, 6), latent_dim=2)

    def test_decoder_must_close_the_loop(self):
        with pytest.raises(ConfigError):
            AeArchitecture(encoder_layers=(6, 4, 2), decoder_layers=(2, 4, 5), latent_dim=2)


class TestInit:
    def test_same_seed_identical(self):
        a = init_model(TINY, seed=3)
        b = init_model(TINY, seed=3)
        for (_, pa), (_, pb) in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa, pb)

    def test_first_encoder_weight_shape(self):
        model = init_model(AeArchitecture.default(100), seed=0)
        assert model.encoder[0].weights.shape == (200, 100)

    def test_biases_zero_and_bn_identity(self):
        model = init_model(TINY, seed=1)
        for layer in model.layers():
            np.testing.assert_array_equal(layer.bias, 0.0)
            if layer.batch_norm is not None:
                np.testing.assert_array_equal(layer.batch_norm.gamma, 1.0)
                np.testing.assert_array_equal(layer.batch_norm.shift, 0.0)

    def test_hidden_layers_have_bn_ends_do_not(self):
        model = init_model(TINY, seed=1)
        assert model.encoder[0].batch_norm is not None
        assert model.encoder[-1].batch_norm is None
        assert model.decoder[0].batch_norm is not None
        assert model.decoder[-1].batch_norm is None
        assert model.encoder[-1].activation == "identity"
        assert model.decoder[-1].activation == "sigmoid"


class TestForward:
    def test_shapes(self):
        model = init_model(TINY, seed=0)
        z, rec = forward(model, tiny_batch(), mode="train")
        assert z.shape == (4, 2) and rec.shape == (4, 6)

    def test_single_sample_inference(self):
        model = init_model(TINY, seed=0)
        z, rec = forward(model, tiny_batch(rows=1)[:1], mode="inference")
        assert z.shape == (1, 2) and np.isfinite(rec).all()

    def test_untrained_outputs_finite(self):
        model = init_model(TINY, seed=4)
        _, rec = forward(model, tiny_batch(seed=5), mode="inference")
        assert np.isfinite(rec).all()

    def test_train_mode_needs_two_rows(self):
        model = init_model(TINY, seed=0)
        with pytest.raises(DataValidationError):
            forward(model, tiny_batch(rows=1)[:1], mode="train")

    def test_inference_batch_equals_per_sample(self):
        # running statistics make inference independent of batch composition
        model = init_model(TINY, seed=2)
        forward(model, tiny_batch(seed=8, rows=16), mode="train")  # move running stats
        batch = tiny_batch(seed=9, rows=5)
        _, rec_all = forward(model, batch, mode="inference")
        rec_rows = [forward(model, batch[i : i + 1], mode="inference")[1] for i in range(5)]
        np.testing.assert_allclose(rec_all, np.vstack(rec_rows), rtol=0, atol=0)


class TestLosses:
    def test_identity_reconstruction_is_zero(self):
        x = tiny_batch()
        assert loss_mse(x, x) == 0.0

    def test_hand_evaluated_case(self):
        assert loss_mse(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]])) == 2.0

    def test_symmetric(self, rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
        assert loss_mse(a, b) == loss_mse(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(DataValidationError):
            loss_mse(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_beta_zero_reduces_to_mse(self):
        model = init_model(TINY, seed=0)
        x = tiny_batch()
        _, rec = forward(model, x)
        assert loss_regularized(model, x, rec, 0.0) == loss_mse(x, rec)

    def test_penalty_linear_in_beta(self):
        model = init_model(TINY, seed=0)
        x = tiny_batch()
        _, rec = forward(model, x)
        base = loss_mse(x, rec)
        p1 = loss_regularized(model, x, rec, 0.1) - base
        p2 = loss_regularized(model, x, rec, 0.2) - base
        assert p2 == pytest.approx(2 * p1)

    def test_zero_weights_zero_penalty(self):
        model = init_model(TINY, seed=0)
        for layer in model.layers():
            layer.weights[:] = 0.0
        assert weight_penalty(model) == 0.0


class TestGradients:
    def test_matches_finite_differences_beta_zero(self):
        model = init_model(TINY, seed=0)
        assert gradient_check(model, tiny_batch(), tolerance=1e-4)

    def test_matches_finite_differences_with_regularization(self):
        model = init_model(TINY, seed=1)
        assert gradient_check(model, tiny_batch(seed=2), tolerance=1e-4, beta_l2=1e-3)

    def test_corrupted_gradient_detected(self):
        model = init_model(TINY, seed=0)
        batch = tiny_batch()
        analytic = parameter_gradients(model, batch, 0.0)
        analytic[0][0, 0] += 0.05
        numeric = numerical_gradients(model, batch, 0.0)
        assert max_relative_error(analytic, numeric) > 1e-4

    def test_gradients_after_some_training(self):
        # check at a non-initial parameter point as well
        X, _ = generate_synthetic(n=24, d=6, informative=2, separation=3.0, seed=0)
        Xs = minmax_scale(X)
        hp = AeHyperparams(epochs=3, batch_size=8, seed=0)
        model = train(Xs, TINY, hp)
        assert gradient_check(model, Xs.values[:4], tolerance=1e-4, beta_l2=1e-4)


@pytest.fixture(scope="module")
def trained_pair():
    X, _ = generate_synthetic(n=200, d=100, informative=10, separation=4.0, seed=1)
    Xs = minmax_scale(X)
    arch = AeArchitecture.default(100, hidden=(32, 16), latent_dim=8)
    hp = AeHyperparams(epochs=30, batch_size=64, seed=5)
    return Xs, arch, hp, train(Xs, arch, hp)


class TestTrain:
    def test_epochs_zero_rejected(self):
        with pytest.raises(ConfigError):
            AeHyperparams(epochs=0)

    def test_loss_decreases_on_synthetic(self, trained_pair):
        _, _, _, model = trained_pair
        history = model.loss_history
        assert len(history) == 30
        assert all(np.isfinite(history))
        assert history[-1] < history[0]

    def test_deterministic_given_seed(self):
        X, _ = generate_synthetic(n=40, d=12, informative=3, separation=3.0, seed=2)
        Xs = minmax_scale(X)
        arch = AeArchitecture.default(12, hidden=(8,), latent_dim=4)
        hp = AeHyperparams(epochs=4, batch_size=10, seed=9)
        h1 = train(Xs, arch, hp).loss_history
        h2 = train(Xs, arch, hp).loss_history
        assert h1 == h2

    def test_needs_enough_samples(self):
        X, _ = generate_synthetic(n=10, d=6, informative=2, separation=2.0, seed=0)
        with pytest.raises(DataValidationError):
            train(minmax_scale(X), TINY, AeHyperparams(epochs=1, batch_size=64))

    def test_large_beta_shrinks_weights(self):
        X, _ = generate_synthetic(n=60, d=10, informative=2, separation=3.0, seed=3)
        Xs = minmax_scale(X)
        arch = AeArchitecture.default(10, hidden=(8,), latent_dim=4)
        free = train(Xs, arch, AeHyperparams(epochs=25, batch_size=20, seed=4, beta_l2=0.0))
        tight = train(Xs, arch, AeHyperparams(epochs=25, batch_size=20, seed=4, beta_l2=1e3))
        norm = lambda m: sum(float(np.linalg.norm(w)) for w in m.weight_matrices())
        assert norm(tight) < norm(free)


class TestEncode:
    def test_shape(self, trained_pair):
        Xs, arch, _, model = trained_pair
        latent = encode(model, Xs)
        assert latent.z_values.shape == (200, 8)
        assert latent.sample_ids == Xs.sample_ids

    def test_default_architecture_latent_width(self):
        X, _ = generate_synthetic(n=20, d=60, informative=4, separation=3.0, seed=0)
        model = init_model(AeArchitecture.default(60), seed=0)
        latent = encode(model, minmax_scale(X))
        assert latent.z_values.shape == (20, 50)

    def test_identical_rows_identical_latents(self):
        model = init_model(TINY, seed=0)
        values = np.vstack([tiny_batch(seed=1, rows=2)] * 2)
        X = ExpressionMatrix(values, tuple(f"s{i}" for i in range(4)), tuple(f"g{j}" for j in range(6)))
        latent = encode(model, X)
        np.testing.assert_array_equal(latent.z_values[0], latent.z_values[2])

    def test_row_order_invariance(self):
        model = init_model(TINY, seed=0)
        values = tiny_batch(seed=3, rows=5)
        ids = tuple(f"s{i}" for i in range(5))
        names = tuple(f"g{j}" for j in range(6))
        fwd = encode(model, ExpressionMatrix(values, ids, names))
        rev = encode(model, ExpressionMatrix(values[::-1], ids[::-1], names))
        np.testing.assert_array_equal(fwd.z_values, rev.z_values[::-1])


class TestCheckpoint:
    def test_roundtrip_exact(self, tmp_path, trained_pair):
        _, _, _, model = trained_pair
        path = tmp_path / "model.json"
        save_model(model, path)
        back = load_model(path)
        for (na, pa), (nb, pb) in zip(model.parameters(), back.parameters()):
            assert na == nb
            np.testing.assert_array_equal(pa, pb)
        for la, lb in zip(model.layers(), back.layers()):
            if la.batch_norm is not None:
                np.testing.assert_array_equal(la.batch_norm.running_mean, lb.batch_norm.running_mean)
                np.testing.assert_array_equal(la.batch_norm.running_var, lb.batch_norm.running_var)
        assert back.loss_history == model.loss_history
        assert back.hyperparams == model.hyperparams

    def test_format_tag_checked(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"format": "other/9"}')
        with pytest.raises(DataValidationError):
            load_model(path)
