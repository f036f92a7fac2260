"""Probability primitives and the finite-difference checker."""

import numpy as np
import pytest

from fullmatch_lab.mathutils import (
    cross_entropy_hard,
    entropy,
    finite_difference_gradient,
    softmax,
    softmax_grad_from_prob_grad,
)


class TestSoftmax:
    def test_zero_logits_are_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), np.full(3, 1 / 3), rtol=0, atol=1e-15)

    @pytest.mark.parametrize("t", [-50.0, 0.0, 1.0, 123.456, 1e8])
    def test_constant_logits_are_uniform(self, t):
        np.testing.assert_allclose(softmax(np.full(3, t)), np.full(3, 1 / 3), atol=1e-15)

    def test_two_class_log_ratio(self):
        # direct evaluation oracle: e^a / sum(e)
        np.testing.assert_allclose(softmax(np.array([np.log(2.0), 0.0])), [2 / 3, 1 / 3], rtol=1e-14)

    def test_rows_sum_to_one_and_shift_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            z = rng.normal(0, 5, size=(4, 7))
            p = softmax(z)
            assert np.all(p > 0)
            np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)
            shifted = softmax(z + rng.normal(0, 10))
            np.testing.assert_allclose(shifted, p, rtol=0, atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            softmax(np.array([1.0, np.nan]))
        with pytest.raises(ValueError):
            softmax(np.array([np.inf, 0.0]))


class TestCrossEntropyHard:
    def test_perfect_prediction_is_zero(self):
        assert cross_entropy_hard(np.array([1.0, 0.0, 0.0]), 0) == 0.0

    def test_uniform_row(self):
        assert cross_entropy_hard(np.full(3, 1 / 3), 2) == pytest.approx(np.log(3), rel=1e-12)

    def test_half_half(self):
        assert cross_entropy_hard(np.array([0.5, 0.5]), 1) == pytest.approx(np.log(2), rel=1e-12)

    def test_target_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy_hard(np.array([0.5, 0.5]), 2)
        with pytest.raises(ValueError):
            cross_entropy_hard(np.array([0.5, 0.5]), -1)

    def test_nonnegative_and_zero_iff_certain(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            p = rng.dirichlet(np.ones(5))
            t = int(rng.integers(5))
            value = cross_entropy_hard(p, t)
            assert value >= 0.0
            assert (value == 0.0) == (p[t] >= 1.0)


class TestEntropy:
    def test_one_hot_is_zero(self):
        assert entropy(np.array([0.0, 1.0, 0.0])) == 0.0

    @pytest.mark.parametrize("c", [2, 3, 10, 100])
    def test_uniform_is_log_c(self, c):
        assert entropy(np.full(c, 1 / c)) == pytest.approx(np.log(c), rel=1e-12)

    def test_direct_summation_oracle(self):
        # -(0.5 ln 0.5 + 2 * 0.25 ln 0.25) = 1.5 ln 2
        assert entropy(np.array([0.5, 0.25, 0.25])) == pytest.approx(1.5 * np.log(2), rel=1e-12)

    def test_uniform_is_maximal(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            p = rng.dirichlet(np.ones(6))
            assert entropy(p) <= np.log(6) + 1e-12

    def test_batch_rows(self):
        batch = np.array([[1.0, 0.0], [0.5, 0.5]])
        np.testing.assert_allclose(entropy(batch), [0.0, np.log(2)], atol=1e-12)


class TestFiniteDifference:
    def test_linear_function(self):
        grad = finite_difference_gradient(lambda x: float(x.sum()), np.array([1.0, -2.0, 3.0]))
        np.testing.assert_allclose(grad, np.ones(3), rtol=1e-9)

    def test_quadratic_identity(self):
        x = np.array([0.3, -1.2, 2.5, 0.0])
        grad = finite_difference_gradient(lambda v: float(0.5 * (v * v).sum()), x)
        np.testing.assert_allclose(grad, x, rtol=1e-8, atol=1e-10)

    def test_matrix_shaped_input(self):
        x = np.arange(6.0).reshape(2, 3)
        grad = finite_difference_gradient(lambda v: float((v * v).sum()), x)
        np.testing.assert_allclose(grad, 2 * x, rtol=1e-8)

    def test_coordinate_subset(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        grad = finite_difference_gradient(lambda v: float((v * v).sum()), x, coords=[1, 3])
        np.testing.assert_allclose(grad, [0.0, 4.0, 0.0, 8.0], rtol=1e-8)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda v: 0.0, np.ones(2), h=0.0)

    def test_rejects_non_finite_values(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda v: float("nan"), np.ones(2))


class TestSoftmaxGradComposition:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        z = rng.normal(0, 2, size=(3, 5))
        w = rng.normal(0, 1, size=(3, 5))

        def f(logits):
            return float((softmax(logits) * w).sum())

        probs = softmax(z)
        analytic = softmax_grad_from_prob_grad(probs, w)
        fd = finite_difference_gradient(f, z)
        np.testing.assert_allclose(analytic, fd, rtol=1e-6, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            softmax_grad_from_prob_grad(np.ones((2, 3)), np.ones((3, 2)))
