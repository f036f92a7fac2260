"""Weak and strong stochastic views."""

import numpy as np
import pytest

from fullmatch_lab.augment import AugmentPolicy, strong_augment, weak_augment


def zero_policy():
    return AugmentPolicy(
        weak_noise_sigma=0.0,
        strong_noise_sigma=0.0,
        strong_dropout_fraction=0.0,
        strong_scale_min=1.0,
        strong_scale_max=1.0,
    )


class TestPolicy:
    def test_default_is_valid(self):
        AugmentPolicy().validate()

    def test_zero_policy_is_valid(self):
        zero_policy().validate()

    def test_weak_must_be_gentler(self):
        with pytest.raises(ValueError):
            AugmentPolicy(weak_noise_sigma=0.3, strong_noise_sigma=0.3).validate()
        with pytest.raises(ValueError):
            AugmentPolicy(weak_noise_sigma=0.5, strong_noise_sigma=0.3).validate()

    def test_dropout_domain(self):
        with pytest.raises(ValueError):
            AugmentPolicy(strong_dropout_fraction=1.0).validate()
        with pytest.raises(ValueError):
            AugmentPolicy(strong_dropout_fraction=-0.1).validate()

    def test_scale_range_must_straddle_one(self):
        with pytest.raises(ValueError):
            AugmentPolicy(strong_scale_min=1.1, strong_scale_max=1.3).validate()
        with pytest.raises(ValueError):
            AugmentPolicy(strong_scale_min=0.0, strong_scale_max=1.2).validate()


class TestWeakAugment:
    def test_zero_sigma_is_identity(self):
        x = np.array([1.0, -2.0, 0.5])
        out = weak_augment(x, zero_policy(), np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_same_stream_is_bit_identical(self):
        x = np.linspace(-1, 1, 10)
        a = weak_augment(x, AugmentPolicy(), np.random.default_rng(7))
        b = weak_augment(x, AugmentPolicy(), np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_output_variance_moment_check(self):
        rng = np.random.default_rng(1)
        x = rng.normal(0.0, 1.0, size=10_000)
        sigma = 0.5
        out = weak_augment(x, AugmentPolicy(weak_noise_sigma=sigma, strong_noise_sigma=1.0), rng)
        expected = x.var() + sigma**2
        assert abs(out.var() - expected) / expected < 0.10

    def test_keeps_shape(self):
        x = np.zeros((5, 3))
        assert weak_augment(x, AugmentPolicy(), np.random.default_rng(0)).shape == (5, 3)


class TestStrongAugment:
    def test_degenerate_policy_is_identity(self):
        x = np.array([0.5, 1.5, -3.0])
        out = strong_augment(x, zero_policy(), np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_same_stream_is_bit_identical(self):
        x = np.linspace(-2, 2, 12).reshape(4, 3)
        a = strong_augment(x, AugmentPolicy(), np.random.default_rng(5))
        b = strong_augment(x, AugmentPolicy(), np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_dropout_frequency(self):
        policy = AugmentPolicy(
            weak_noise_sigma=0.0,
            strong_noise_sigma=0.0,
            strong_dropout_fraction=0.25,
            strong_scale_min=1.0,
            strong_scale_max=1.0,
        )
        x = np.ones(10_000)
        out = strong_augment(x, policy, np.random.default_rng(3))
        rate = (out == 0.0).mean()
        assert abs(rate - 0.25) < 0.05 * 1.0  # within 5 percentage points

    def test_keeps_shape(self):
        x = np.zeros((8, 2))
        assert strong_augment(x, AugmentPolicy(), np.random.default_rng(0)).shape == (8, 2)

    def test_scale_is_global_per_sample(self):
        policy = AugmentPolicy(
            weak_noise_sigma=0.0,
            strong_noise_sigma=0.0,
            strong_dropout_fraction=0.0,
            strong_scale_min=0.5,
            strong_scale_max=2.0,
        )
        x = np.ones((6, 4))
        out = strong_augment(x, policy, np.random.default_rng(9))
        # every coordinate of one sample is multiplied by the same factor
        for row in out:
            assert np.ptp(row) < 1e-15
        assert np.ptp(out[:, 0]) > 0  # but samples differ
