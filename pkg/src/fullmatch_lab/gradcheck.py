"""Finite-difference verification of every analytic gradient in the package.

The checks treat each loss as a black-box scalar function of logits and
compare its analytic gradient against central differences.  Selection
states are frozen at the unperturbed point, matching the training-time
convention that indicator masks are constants of the optimization.

Large instances are probed on a coordinate subset: every coordinate the
analytic gradient marks as nonzero (up to a cap), plus a random sample of
the reportedly-zero ones to confirm they really are flat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .labeling import SelectionState, build_selection_state
from .mathutils import finite_difference_gradient, softmax, softmax_grad_from_prob_grad
from .model import (
    ModelParameters,
    backward,
    flatten_gradients,
    flatten_parameters,
    forward,
    init_model,
    unflatten_parameters,
)

LOSS_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-5
CLOSED_FORM_TOLERANCE = 1e-10

SIZE_GRID = [(3, 1), (3, 8), (3, 64), (10, 1), (10, 8), (10, 64), (100, 1), (100, 8), (100, 64)]
# Share of instances per (C, B) cell; big cells get fewer so the suite stays fast.
SIZE_WEIGHTS = [0.14, 0.14, 0.12, 0.14, 0.12, 0.10, 0.12, 0.08, 0.04]

LOSS_FAMILIES = ("l_s", "l_us", "l_eml_bce", "l_eml_ce", "l_anl", "l_sum")

COORD_CAP = 160
ZERO_SAMPLE = 48
FD_STEP = 1e-5


@dataclass
class FamilyResult:
    family: str
    instances: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _allocate_instances(total: int) -> list[int]:
    counts = [int(np.floor(w * total)) for w in SIZE_WEIGHTS]
    i = 0
    while sum(counts) < total:
        counts[i % len(counts)] += 1
        i += 1
    return counts


def _selection_instance(
    rng: np.random.Generator, batch: int, num_classes: int, need_negatives: bool
) -> tuple[np.ndarray, np.ndarray, SelectionState]:
    """Random (weak probs, strong logits, state) with useful masks.

    Row 0 is forced confident so the pseudo-label masks are never empty.
    Confident rows are built directly in probability space with a target
    probability just above the threshold; saturating the softmax would put
    the finite differences below the float64 noise floor.  When negatives
    are required, the state is rebuilt with a small k in the rare case the
    adaptive value lands at C.
    """
    tau = 0.95
    confident = rng.random(batch) < 0.6
    confident[0] = True
    targets = rng.integers(0, num_classes, batch)
    raw = rng.gamma(1.0, 1.0, (batch, num_classes)) + 1e-3
    weak = raw / raw.sum(axis=1, keepdims=True)
    p_target = rng.uniform(0.955, 0.995, batch)
    rows = np.arange(batch)
    boosted = weak.copy()
    boosted[rows, targets] = 0.0
    boosted *= ((1.0 - p_target) / boosted.sum(axis=1))[:, None]
    boosted[rows, targets] = p_target
    weak = np.where(confident[:, None], boosted, weak)
    strong_logits = rng.uniform(0.3, 0.8) * np.log(weak) + rng.normal(0.0, 0.7, (batch, num_classes))
    state = build_selection_state(weak, softmax(strong_logits), tau)
    if need_negatives and not state.negative_mask.any():
        state = build_selection_state(weak, softmax(strong_logits), tau, k_override=2)
    return weak, strong_logits, state


def _check_coords(rng: np.random.Generator, analytic: np.ndarray) -> np.ndarray:
    """Flat indices to probe: the nonzero support plus a few zero entries."""
    flat = analytic.ravel()
    nonzero = np.flatnonzero(flat != 0.0)
    zero = np.flatnonzero(flat == 0.0)
    if nonzero.size > COORD_CAP:
        nonzero = rng.choice(nonzero, COORD_CAP, replace=False)
    if zero.size > ZERO_SAMPLE:
        zero = rng.choice(zero, ZERO_SAMPLE, replace=False)
    return np.concatenate([nonzero, zero])


def _fd_relative_error(
    rng: np.random.Generator, f, logits: np.ndarray, analytic: np.ndarray
) -> float:
    coords = _check_coords(rng, analytic)
    fd = finite_difference_gradient(f, logits, h=FD_STEP, coords=coords)
    diff = np.linalg.norm(fd.ravel()[coords] - analytic.ravel()[coords])
    scale = np.linalg.norm(analytic.ravel()[coords])
    if scale == 0.0:
        # Flat function: the difference itself must be numerically zero.
        return diff
    return float(diff / scale)


def _family_instance_error(
    family: str, rng: np.random.Generator, batch: int, num_classes: int
) -> float:
    if family == "l_s":
        logits = rng.normal(0.0, 2.0, (batch, num_classes))
        labels = rng.integers(0, num_classes, batch)
        probs = softmax(logits)
        analytic = softmax_grad_from_prob_grad(probs, losses.supervised_grad(probs, labels))
        f = lambda z: losses.supervised_loss(softmax(z), labels)
        return _fd_relative_error(rng, f, logits, analytic)

    _, strong_logits, state = _selection_instance(
        rng, batch, num_classes, need_negatives=family in ("l_anl", "l_sum")
    )
    probs = softmax(strong_logits)
    if family == "l_us":
        grad_p = losses.unsupervised_grad(probs, state)
        f = lambda z: losses.unsupervised_loss(softmax(z), state)
    elif family == "l_eml_bce":
        grad_p = losses.eml_grad(probs, state, "bce")
        f = lambda z: losses.eml_loss(softmax(z), state, "bce")
    elif family == "l_eml_ce":
        grad_p = losses.eml_grad(probs, state, "ce")
        f = lambda z: losses.eml_loss(softmax(z), state, "ce")
    elif family == "l_anl":
        grad_p = losses.anl_grad(probs, state)
        f = lambda z: losses.anl_loss(softmax(z), state)
    elif family == "l_sum":
        alpha = float(rng.choice([0.5, 1.0, 2.0]))
        beta = float(rng.choice([0.5, 1.0, 2.0]))
        grad_p = (
            losses.unsupervised_grad(probs, state)
            + alpha * losses.anl_grad(probs, state)
            + beta * losses.eml_grad(probs, state, "bce")
        )
        f = lambda z: (
            losses.unsupervised_loss(softmax(z), state)
            + alpha * losses.anl_loss(softmax(z), state)
            + beta * losses.eml_loss(softmax(z), state, "bce")
        )
    else:
        raise ValueError(f"unknown family {family!r}")
    analytic = softmax_grad_from_prob_grad(probs, grad_p)
    return _fd_relative_error(rng, f, strong_logits, analytic)


def run_loss_checks(seed: int = 0, instances: int = 100) -> list[FamilyResult]:
    """FD-verify each loss family on ``instances`` random cases over the size grid."""
    results = []
    for family in LOSS_FAMILIES:
        rng = np.random.default_rng(np.random.SeedSequence((seed, LOSS_FAMILIES.index(family))))
        worst = 0.0
        count = 0
        for (num_classes, batch), n_inst in zip(SIZE_GRID, _allocate_instances(instances)):
            for _ in range(n_inst):
                err = _family_instance_error(family, rng, batch, num_classes)
                worst = max(worst, err)
                count += 1
        results.append(
            FamilyResult(family=family, instances=count, max_rel_error=worst, tolerance=LOSS_TOLERANCE)
        )
    return results


def run_closed_form_checks(seed: int = 0, instances: int = 100) -> FamilyResult:
    """Closed-form target-class gradient vs. the differentiated loss path.

    Half the instances restrict the non-target set to the adaptive top-k
    (the integrated regime); the rest use the plain all-but-target set.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 101)))
    worst = 0.0
    for i in range(instances):
        num_classes = int(rng.choice([3, 5, 10, 40]))
        batch = int(rng.choice([1, 4, 16]))
        _, strong_logits, state = _selection_instance(rng, batch, num_classes, need_negatives=(i % 2 == 0))
        probs = softmax(strong_logits)
        grad = losses.eml_grad(probs, state, "bce")
        rows = np.flatnonzero(state.has_pseudo_label)
        for row in rows:
            target = state.target_class[row]
            nontarget = np.flatnonzero(state.nontarget_mask[row])
            closed = losses.eml_target_class_gradient(
                probs[row], target, nontarget, batch, num_classes
            )
            through = grad[row, target]
            denom = max(abs(closed), 1e-300)
            worst = max(worst, abs(through - closed) / denom)
    return FamilyResult(
        family="eml_target_closed_form",
        instances=instances,
        max_rel_error=worst,
        tolerance=CLOSED_FORM_TOLERANCE,
    )


def uniform_row_closed_form_error(num_classes: int, batch: int = 1) -> float:
    """Relative deviation of the uniform-row value from -ln(C-1)/(B*C)."""
    p = np.full(num_classes, 1.0 / num_classes)
    nontarget = np.arange(1, num_classes)
    value = losses.eml_target_class_gradient(p, 0, nontarget, batch, num_classes)
    expected = -np.log(num_classes - 1.0) / (batch * num_classes)
    return abs(value - expected) / abs(expected)


def sign_report(seed: int = 0, instances: int = 200) -> tuple[int, int]:
    """(negative-valued cases, total) for rows with all non-target p below 0.5."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 202)))
    negative = 0
    total = 0
    for _ in range(instances):
        num_classes = int(rng.choice([3, 5, 10]))
        logits = rng.normal(0.0, 1.0, num_classes)
        target = int(rng.integers(0, num_classes))
        logits[target] += 3.0
        p = softmax(logits)
        nontarget = np.array([c for c in range(num_classes) if c != target])
        if np.all(p[nontarget] < 0.5):
            total += 1
            value = losses.eml_target_class_gradient(p, target, nontarget, 1, num_classes)
            if value < 0:
                negative += 1
    return negative, total


def run_model_checks(seed: int = 0, configurations: int = 20) -> FamilyResult:
    """FD-verify backpropagation through random little networks.

    Each case freezes a batch and a selection state, then differentiates the
    combined step loss with respect to every parameter.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 303)))
    worst = 0.0
    for _ in range(configurations):
        in_dim = int(rng.integers(2, 6))
        hidden = int(rng.integers(3, 9))
        num_classes = int(rng.integers(3, 6))
        n_l = int(rng.integers(1, 4))
        n_u = int(rng.integers(2, 6))
        params = init_model([in_dim, hidden, num_classes], rng)
        x_l = rng.normal(0.0, 1.0, (n_l, in_dim))
        y_l = rng.integers(0, num_classes, n_l)
        x_w = rng.normal(0.0, 1.0, (n_u, in_dim))
        x_s = x_w + rng.normal(0.0, 0.3, (n_u, in_dim))

        logits_w, _ = forward(params, x_w)
        logits_s, _ = forward(params, x_s)
        weak = softmax(5.0 * logits_w)
        state = build_selection_state(weak, softmax(logits_s), 0.6, k_override=2)

        def step_loss(p: ModelParameters) -> float:
            pl, _ = forward(p, x_l)
            ps, _ = forward(p, x_s)
            probs_l = softmax(pl)
            probs_s = softmax(ps)
            return (
                losses.supervised_loss(probs_l, y_l)
                + losses.unsupervised_loss(probs_s, state)
                + losses.anl_loss(probs_s, state)
                + losses.eml_loss(probs_s, state, "bce")
            )

        logits_l, cache_l = forward(params, x_l)
        logits_s, cache_s = forward(params, x_s)
        probs_l = softmax(logits_l)
        probs_s = softmax(logits_s)
        grad_l = softmax_grad_from_prob_grad(probs_l, losses.supervised_grad(probs_l, y_l))
        grad_p_s = (
            losses.unsupervised_grad(probs_s, state)
            + losses.anl_grad(probs_s, state)
            + losses.eml_grad(probs_s, state, "bce")
        )
        grad_s = softmax_grad_from_prob_grad(probs_s, grad_p_s)
        g_l = backward(params, cache_l, grad_l)
        g_s = backward(params, cache_s, grad_s)
        analytic = flatten_gradients(g_l) + flatten_gradients(g_s)

        theta = flatten_parameters(params)
        fd = finite_difference_gradient(
            lambda v: step_loss(unflatten_parameters(params, v)), theta, h=1e-5
        )
        err = np.linalg.norm(fd - analytic) / max(np.linalg.norm(analytic), 1e-300)
        worst = max(worst, float(err))
    return FamilyResult(
        family="model_backward",
        instances=configurations,
        max_rel_error=worst,
        tolerance=MODEL_TOLERANCE,
    )
