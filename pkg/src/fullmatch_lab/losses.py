"""Training objectives and their exact gradients.

Five scalars drive a training step: the supervised cross entropy, the masked
unsupervised cross entropy, the entropy-meaning loss on non-target classes,
the negative-learning loss, and their weighted sum.  Each loss is computed
by a fused ``*_value_and_grad`` function (the trainer wants both anyway and
the logarithms are shared); the plain value/gradient names are thin wrappers
over it.  Gradients are taken with respect to the probability matrix;
logit-space gradients follow by composing with the softmax Jacobian
(``mathutils.softmax_grad_from_prob_grad``).

Two differentiation conventions matter and are fixed here:

* Selection masks are indicator functions of the inputs and are treated as
  constants (zero gradient almost everywhere).
* The shared residual target y = (1 - p_target) / m is a function of the
  target-class probability, and that dependence *is* differentiated.  Its
  closed form is ``eml_target_class_gradient``, kept as an independent
  oracle for the entropy-meaning loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labeling import SelectionState
from .mathutils import LOG_EPS, clamped_log

EML_VARIANTS = ("bce", "ce")


@dataclass
class LossBreakdown:
    """The five scalars of one training step plus the weights that mixed them."""

    l_s: float
    l_us: float
    l_eml: float
    l_anl: float
    l_sum: float
    alpha: float
    beta: float


def _gated_reciprocal(x: np.ndarray) -> np.ndarray:
    """Derivative of clamped_log at x: 1/x above the clamp, 0 inside it."""
    out = np.zeros_like(x)
    np.divide(1.0, x, out=out, where=x > LOG_EPS)
    return out


def l2_consistency(probs_a: np.ndarray, probs_b: np.ndarray) -> float:
    """Summed squared L2 distance between two probability batches.

    The unmasked consistency baseline; kept for comparison, not used by the
    trainer.
    """
    probs_a = np.asarray(probs_a, dtype=np.float64)
    probs_b = np.asarray(probs_b, dtype=np.float64)
    if probs_a.shape != probs_b.shape:
        raise ValueError("l2_consistency: shape mismatch")
    diff = probs_a - probs_b
    return float((diff * diff).sum())


def supervised_value_and_grad(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross entropy of labeled predictions against true classes."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    batch = probs.shape[0]
    if batch == 0:
        raise ValueError("supervised loss: empty labeled batch")
    rows = np.arange(batch)
    picked = probs[rows, labels]
    value = float(-clamped_log(picked).sum() / batch)
    grad = np.zeros_like(probs)
    grad[rows, labels] = -_gated_reciprocal(picked) / batch
    return value, grad


def unsupervised_value_and_grad(
    strong_probs: np.ndarray, state: SelectionState
) -> tuple[float, np.ndarray]:
    """Cross entropy of strong-view rows against their pseudo-labels.

    Normalized by the full batch size; rows without a pseudo-label
    contribute zero.
    """
    strong_probs = np.asarray(strong_probs, dtype=np.float64)
    grad = np.zeros_like(strong_probs)
    batch = strong_probs.shape[0]
    sel = state.has_pseudo_label
    if batch == 0 or not sel.any():
        return 0.0, grad
    targets = state.target_class[sel]
    picked = strong_probs[sel, targets]
    value = float(-clamped_log(picked).sum() / batch)
    grad[sel, targets] = -_gated_reciprocal(picked) / batch
    return value, grad


def eml_targets(p: np.ndarray, target: int, nontarget: np.ndarray) -> np.ndarray:
    """Shared residual confidence for the given non-target classes.

    Every listed class gets (1 - p[target]) / m, so the targets jointly
    absorb exactly the probability mass the target class leaves behind.
    """
    p = np.asarray(p, dtype=np.float64)
    nontarget = np.asarray(nontarget)
    if nontarget.size == 0:
        raise ValueError("eml_targets: non-target set is empty")
    if target in nontarget:
        raise ValueError("eml_targets: target class listed as non-target")
    share = (1.0 - p[target]) / nontarget.size
    return np.full(nontarget.size, share, dtype=np.float64)


def eml_value_and_grad(
    strong_probs: np.ndarray, state: SelectionState, variant: str = "bce"
) -> tuple[float, np.ndarray]:
    """Entropy-meaning loss over non-target classes of pseudo-labeled rows.

    The default binary-cross-entropy form supervises each masked class toward
    its residual share y; the "ce" variant keeps only the y*log(p) term (an
    ablation) under the same 1/(B*C) normalization.  The gradient includes
    the term from y's dependence on the target probability.
    """
    if variant not in EML_VARIANTS:
        raise ValueError(f"eml loss: unknown variant {variant!r}")
    strong_probs = np.asarray(strong_probs, dtype=np.float64)
    grad = np.zeros_like(strong_probs)
    batch = strong_probs.shape[0]
    mask = state.nontarget_mask
    if batch == 0 or not mask.any():
        return 0.0, grad
    num_classes = strong_probs.shape[1]
    norm = batch * num_classes
    m = state.k - 1
    sel = state.has_pseudo_label
    targets = state.target_class[sel]

    y = np.zeros(batch, dtype=np.float64)
    y[sel] = (1.0 - strong_probs[sel, targets]) / m
    y_col = y[:, None]

    log_p = clamped_log(strong_probs)
    inv_p = _gated_reciprocal(strong_probs)
    if variant == "bce":
        comp = 1.0 - strong_probs
        log_1mp = clamped_log(comp)
        inv_1mp = _gated_reciprocal(comp)
        value = float(-((y_col * log_p + (1.0 - y_col) * log_1mp) * mask).sum() / norm)
        grad = np.where(mask, -(y_col * inv_p - (1.0 - y_col) * inv_1mp) / norm, 0.0)
        through_y = ((log_p - log_1mp) * mask).sum(axis=1) / (norm * m)
    else:
        value = float(-(y_col * log_p * mask).sum() / norm)
        grad = np.where(mask, -(y_col * inv_p) / norm, 0.0)
        through_y = (log_p * mask).sum(axis=1) / (norm * m)
    grad[sel, targets] += through_y[sel]
    return value, grad


def eml_target_class_gradient(
    p: np.ndarray, target: int, nontarget: np.ndarray, batch_size: int, num_classes: int
) -> float:
    """Closed form of d(eml_loss)/d(p_target) for one pseudo-labeled row.

    Equals -log(prod(1 - p_c) / prod(p_c)) over the non-target classes,
    scaled by 1/(B*C*m).  Evaluated in log space so long products cannot
    underflow; probabilities at 0 or 1 fall back to the shared clamp.
    """
    p = np.asarray(p, dtype=np.float64)
    nontarget = np.asarray(nontarget)
    if nontarget.size == 0:
        raise ValueError("eml_target_class_gradient: non-target set is empty")
    m = nontarget.size
    pc = p[nontarget]
    log_ratio = (clamped_log(1.0 - pc) - clamped_log(pc)).sum()
    return float(-log_ratio / (batch_size * num_classes * m))


def anl_value_and_grad(
    strong_probs: np.ndarray, state: SelectionState
) -> tuple[float, np.ndarray]:
    """Negative-learning loss: -mean over the batch of sum log(1 - p_c)
    across negatively labeled classes.  Zero when k = C."""
    strong_probs = np.asarray(strong_probs, dtype=np.float64)
    grad = np.zeros_like(strong_probs)
    batch = strong_probs.shape[0]
    mask = state.negative_mask
    if batch == 0 or not mask.any():
        return 0.0, grad
    comp = 1.0 - strong_probs
    value = float(-(clamped_log(comp) * mask).sum() / batch)
    np.divide(1.0, comp, out=grad, where=mask & (comp > LOG_EPS))
    grad /= batch
    return value, grad


# Value-only / gradient-only views of the fused implementations.


def supervised_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    return supervised_value_and_grad(probs, labels)[0]


def supervised_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return supervised_value_and_grad(probs, labels)[1]


def unsupervised_loss(strong_probs: np.ndarray, state: SelectionState) -> float:
    return unsupervised_value_and_grad(strong_probs, state)[0]


def unsupervised_grad(strong_probs: np.ndarray, state: SelectionState) -> np.ndarray:
    return unsupervised_value_and_grad(strong_probs, state)[1]


def eml_loss(strong_probs: np.ndarray, state: SelectionState, variant: str = "bce") -> float:
    return eml_value_and_grad(strong_probs, state, variant)[0]


def eml_grad(strong_probs: np.ndarray, state: SelectionState, variant: str = "bce") -> np.ndarray:
    return eml_value_and_grad(strong_probs, state, variant)[1]


def anl_loss(strong_probs: np.ndarray, state: SelectionState) -> float:
    return anl_value_and_grad(strong_probs, state)[0]


def anl_grad(strong_probs: np.ndarray, state: SelectionState) -> np.ndarray:
    return anl_value_and_grad(strong_probs, state)[1]


def total_loss(
    l_s: float, l_us: float, l_anl: float, l_eml: float, alpha: float, beta: float
) -> LossBreakdown:
    """Weighted sum l_s + l_us + alpha*l_anl + beta*l_eml with its parts."""
    parts = (l_s, l_us, l_anl, l_eml)
    if not all(np.isfinite(v) for v in parts):
        raise ValueError(f"total_loss: non-finite component in {parts}")
    l_sum = l_s + l_us + alpha * l_anl + beta * l_eml
    return LossBreakdown(
        l_s=float(l_s),
        l_us=float(l_us),
        l_eml=float(l_eml),
        l_anl=float(l_anl),
        l_sum=float(l_sum),
        alpha=float(alpha),
        beta=float(beta),
    )
