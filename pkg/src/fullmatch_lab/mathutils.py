"""Numerically stable probability primitives and a finite-difference checker.

Everything here is a pure function over float64 arrays.  The clamping policy
is shared by every loss in the package: logarithm arguments are clipped to
[LOG_EPS, 1], which makes log(p) and log(1 - p) finite even for saturated
probabilities.  Gradient helpers are exact derivatives of the *clamped*
expressions, so they vanish inside the clipped region instead of blowing up.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

# Lower clamp for any probability appearing inside a logarithm.
LOG_EPS = 1e-12


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax along the last axis.

    Uses max-subtraction, so any finite logits are safe.  Non-finite inputs
    are rejected rather than silently propagated.
    """
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax: logits must be finite")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def clamped_log(x: np.ndarray) -> np.ndarray:
    """log of x with x clipped into [LOG_EPS, 1]."""
    return np.log(np.clip(x, LOG_EPS, 1.0))


def clamped_log_grad(x: np.ndarray) -> np.ndarray:
    """Derivative of ``clamped_log`` w.r.t. x: 1/x inside (LOG_EPS, 1], else 0."""
    x = np.asarray(x, dtype=np.float64)
    inside = x > LOG_EPS
    out = np.zeros_like(x)
    np.divide(1.0, x, out=out, where=inside)
    return out


def cross_entropy_hard(p: np.ndarray, target: int) -> float:
    """-log p[target] for a single probability row with a hard class target."""
    p = np.asarray(p, dtype=np.float64)
    if not (0 <= target < p.shape[-1]):
        raise ValueError(f"cross_entropy_hard: target {target} out of range for C={p.shape[-1]}")
    return float(-clamped_log(p[..., target]))


def entropy(p: np.ndarray) -> np.ndarray:
    """Natural-log entropy along the last axis, with 0*log(0) treated as 0."""
    p = np.asarray(p, dtype=np.float64)
    logs = np.where(p > 0.0, np.log(np.clip(p, LOG_EPS, 1.0)), 0.0)
    return -(p * logs).sum(axis=-1)


def softmax_grad_from_prob_grad(probs: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Pull a gradient in probability space back through the softmax.

    For p = softmax(z), dL/dz = p * (dL/dp - <dL/dp, p>), row-wise along the
    last axis.  This is the only Jacobian composition the package needs.
    """
    probs = np.asarray(probs, dtype=np.float64)
    grad_p = np.asarray(grad_p, dtype=np.float64)
    if probs.shape != grad_p.shape:
        raise ValueError("softmax_grad_from_prob_grad: shape mismatch")
    inner = (grad_p * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_p - inner)


def finite_difference_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    h: float = 1e-5,
    coords: Sequence[int] | None = None,
) -> np.ndarray:
    """Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / (2h).

    ``x`` may have any shape; the result has the same shape.  When ``coords``
    is given (flat indices), only those coordinates are probed and the rest of
    the output stays zero, which keeps large batched checks affordable.
    """
    if h <= 0:
        raise ValueError("finite_difference_gradient: h must be positive")
    x = np.asarray(x, dtype=np.float64)
    flat = x.ravel().copy()
    grad = np.zeros_like(flat)
    indices = range(flat.size) if coords is None else coords
    for i in indices:
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f(flat.reshape(x.shape)))
        flat[i] = orig - h
        f_minus = float(f(flat.reshape(x.shape)))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise ValueError("finite_difference_gradient: f returned a non-finite value")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(x.shape)
