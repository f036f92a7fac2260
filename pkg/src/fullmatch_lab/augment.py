"""Stochastic weak and strong views of feature vectors.

The weak view is additive Gaussian noise; the strong view applies coordinate
dropout, heavier noise, and a random global scale, in that order.  Both
accept a single vector or a batch and never change dimensionality.  All
randomness flows through the caller's Generator, so identical streams give
bit-identical views.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AugmentPolicy:
    """Perturbation strengths for the two views.

    The strong view must perturb at least as hard as the weak one; equality
    is only allowed in the fully degenerate zero-noise case used to switch
    augmentation off.
    """

    weak_noise_sigma: float = 0.05
    strong_noise_sigma: float = 0.3
    strong_dropout_fraction: float = 0.25
    strong_scale_min: float = 0.8
    strong_scale_max: float = 1.25

    def validate(self) -> None:
        if self.weak_noise_sigma < 0 or self.strong_noise_sigma < 0:
            raise ValueError("AugmentPolicy: noise sigmas must be non-negative")
        weak_strictly_smaller = self.weak_noise_sigma < self.strong_noise_sigma
        both_zero = self.weak_noise_sigma == self.strong_noise_sigma == 0.0
        if not (weak_strictly_smaller or both_zero):
            raise ValueError(
                "AugmentPolicy: weak_noise_sigma must be smaller than strong_noise_sigma"
            )
        if not (0.0 <= self.strong_dropout_fraction < 1.0):
            raise ValueError("AugmentPolicy: strong_dropout_fraction must lie in [0, 1)")
        if not (0.0 < self.strong_scale_min <= 1.0 <= self.strong_scale_max):
            raise ValueError("AugmentPolicy: scale range must be a positive interval around 1")


def weak_augment(x: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    """x plus Gaussian noise with the weak sigma."""
    x = np.asarray(x, dtype=np.float64)
    return x + rng.normal(0.0, policy.weak_noise_sigma, size=x.shape)


def strong_augment(x: np.ndarray, policy: AugmentPolicy, rng: np.random.Generator) -> np.ndarray:
    """Coordinate dropout, then Gaussian noise, then a global per-sample scale."""
    x = np.asarray(x, dtype=np.float64)
    keep = rng.random(size=x.shape) >= policy.strong_dropout_fraction
    out = np.where(keep, x, 0.0)
    out = out + rng.normal(0.0, policy.strong_noise_sigma, size=x.shape)
    if x.ndim == 1:
        scale = rng.uniform(policy.strong_scale_min, policy.strong_scale_max)
    else:
        scale = rng.uniform(policy.strong_scale_min, policy.strong_scale_max, size=(x.shape[0], 1))
    return out * scale
