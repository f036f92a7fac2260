"""The dense classifier: init, forward, exact backward, checkpoints."""

import numpy as np
import pytest

from fullmatch_lab.mathutils import finite_difference_gradient
from fullmatch_lab.model import (
    backward,
    flatten_gradients,
    flatten_parameters,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    unflatten_parameters,
)


class TestInit:
    def test_same_seed_same_parameters(self):
        a = init_model([2, 3], 42)
        b = init_model([2, 3], 42)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_different_seeds_differ(self):
        a = init_model([2, 3], 1)
        b = init_model([2, 3], 2)
        assert not np.array_equal(a.weights[0], b.weights[0])

    def test_biases_start_at_zero(self):
        params = init_model([4, 8, 3], 0)
        for b in params.biases:
            np.testing.assert_array_equal(b, np.zeros_like(b))

    def test_weight_variance_scales_with_fan_in(self):
        params = init_model([100, 100], 3)  # 10^4 weight samples
        var = params.weights[0].var()
        assert abs(var - 0.01) / 0.01 < 0.10

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            init_model([3], 0)
        with pytest.raises(ValueError):
            init_model([3, 0, 2], 0)


class TestForward:
    def test_zero_parameters_give_zero_logits(self):
        params = init_model([2, 4, 3], 0)
        for w in params.weights:
            w[:] = 0.0
        logits, _ = forward(params, np.array([0.3, -0.7]))
        np.testing.assert_array_equal(logits, np.zeros(3))

    def test_single_linear_layer_picks_column(self):
        params = init_model([3, 2], 1)
        x = np.zeros(3)
        x[1] = 1.0
        logits, _ = forward(params, x)
        np.testing.assert_allclose(logits, params.weights[0][:, 1] + params.biases[0], rtol=1e-15)

    def test_matches_naive_matmul_oracle(self):
        rng = np.random.default_rng(2)
        params = init_model([3, 5, 4], 7)
        params.biases[0][:] = rng.normal(size=5)
        params.biases[1][:] = rng.normal(size=4)
        x = rng.normal(size=3)
        logits, _ = forward(params, x)

        h = np.zeros(5)
        for o in range(5):
            acc = params.biases[0][o]
            for i in range(3):
                acc += params.weights[0][o, i] * x[i]
            h[o] = max(acc, 0.0)
        expected = np.zeros(4)
        for o in range(4):
            acc = params.biases[1][o]
            for i in range(5):
                acc += params.weights[1][o, i] * h[i]
            expected[o] = acc
        np.testing.assert_allclose(logits, expected, rtol=0, atol=1e-12)

    def test_batch_and_single_agree(self):
        # BLAS may take different paths for matvec vs gemm; agreement is to
        # rounding, exact determinism holds per input shape.
        rng = np.random.default_rng(3)
        params = init_model([4, 6, 3], 5)
        xb = rng.normal(size=(7, 4))
        batch_logits, _ = forward(params, xb)
        for i in range(7):
            single, _ = forward(params, xb[i])
            np.testing.assert_allclose(single, batch_logits[i], rtol=1e-12, atol=1e-14)

    def test_dim_mismatch_rejected(self):
        params = init_model([4, 3], 0)
        with pytest.raises(ValueError):
            forward(params, np.zeros(5))


class TestBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        params = init_model([3, 4, 2], 0)
        _, cache = forward(params, np.ones(3))
        grads = backward(params, cache, np.zeros(2))
        assert all(np.all(g == 0) for g in grads.weights)
        assert all(np.all(g == 0) for g in grads.biases)

    def test_linear_layer_outer_product(self):
        # squared error L = 0.5 ||Wx + b - y||^2 has dW = (out - y) x^T
        params = init_model([3, 2], 4)
        x = np.array([0.5, -1.0, 2.0])
        y = np.array([1.0, -1.0])
        logits, cache = forward(params, x)
        err = logits - y
        grads = backward(params, cache, err)
        np.testing.assert_allclose(grads.weights[0], np.outer(err, x), rtol=1e-12)
        np.testing.assert_allclose(grads.biases[0], err, rtol=1e-12)

    def test_stale_cache_rejected(self):
        params = init_model([3, 2], 0)
        _, cache = forward(params, np.ones(3))
        other = params.copy()
        with pytest.raises(ValueError):
            backward(other, cache, np.zeros(2))

    def test_gradient_shapes_are_congruent(self):
        params = init_model([5, 7, 4], 1)
        _, cache = forward(params, np.ones((3, 5)))
        grads = backward(params, cache, np.ones((3, 4)))
        for g, w in zip(grads.weights, params.weights):
            assert g.shape == w.shape
        for g, b in zip(grads.biases, params.biases):
            assert g.shape == b.shape

    def test_matches_finite_differences_on_random_nets(self):
        rng = np.random.default_rng(5)
        for _ in range(8):
            dims = [int(rng.integers(2, 5)), int(rng.integers(3, 7)), int(rng.integers(2, 5))]
            params = init_model(dims, int(rng.integers(1000)))
            x = rng.normal(size=(4, dims[0]))
            w = rng.normal(size=(4, dims[-1]))

            def loss_of(theta):
                p = unflatten_parameters(params, theta)
                out, _ = forward(p, x)
                return float((out * w).sum())

            logits, cache = forward(params, x)
            analytic = flatten_gradients(backward(params, cache, w))
            fd = finite_difference_gradient(loss_of, flatten_parameters(params))
            np.testing.assert_allclose(analytic, fd, rtol=1e-5, atol=1e-9)


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path):
        params = init_model([3, 8, 4], 11)
        params.weights[0][0, 0] = 1.0 / 3.0  # non-terminating binary fraction
        path = tmp_path / "model.txt"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.layer_dims == params.layer_dims
        for a, b in zip(params.weights, loaded.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(params.biases, loaded.biases):
            np.testing.assert_array_equal(a, b)

    def test_save_is_deterministic(self, tmp_path):
        params = init_model([2, 5, 3], 9)
        p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
        save_checkpoint(params, p1)
        save_checkpoint(params, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(ValueError):
            load_checkpoint(path)
