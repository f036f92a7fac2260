"""Per-batch labeling decisions: threshold selection, class ranks, adaptive k.

Given the weak-view probabilities Q and strong-view probabilities P of one
unlabeled batch, this module decides which samples receive a pseudo-label,
which classes count as supervised non-targets, and which classes receive a
negative label.  All tie-breaking is by ascending class index so that runs
are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SelectionState:
    """Labeling outcome for one unlabeled batch.

    has_pseudo_label : (B,) bool, max weak confidence reached the threshold
    target_class     : (B,) int, weak-view argmax; only meaningful where
                       has_pseudo_label is set (-1 elsewhere)
    selected_mask    : (B, C) bool, union of the pseudo-label class and the
                       negatively labeled classes
    nontarget_mask   : (B, C) bool, classes supervised toward the shared
                       residual confidence (pseudo-labeled rows only)
    negative_mask    : (B, C) bool, classes ranked after k in the weak view
    k                : int in [2, C], the batch's adaptive top-k cutoff
    """

    has_pseudo_label: np.ndarray
    target_class: np.ndarray
    selected_mask: np.ndarray
    nontarget_mask: np.ndarray
    negative_mask: np.ndarray
    k: int

    @property
    def batch_size(self) -> int:
        return self.has_pseudo_label.shape[0]

    @property
    def num_classes(self) -> int:
        return self.selected_mask.shape[1]


def rank_classes(q: np.ndarray) -> np.ndarray:
    """Descending-confidence ranks, 1-based, ties broken by ascending index.

    Accepts a single probability row (C,) or a batch (B, C); the result has
    the same shape.  rank 1 marks the largest probability.
    """
    q = np.asarray(q, dtype=np.float64)
    order = np.argsort(-q, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    positions = np.broadcast_to(np.arange(1, q.shape[-1] + 1), q.shape)
    np.put_along_axis(ranks, order, positions, axis=-1)
    return ranks


def _batch_ranks(probs: np.ndarray) -> np.ndarray:
    """rank_classes on a batch, via comparison counting when that is cheaper.

    A class's rank is one plus the number of strictly larger entries plus the
    number of equal entries at smaller indices, which reproduces the stable
    descending sort exactly while avoiding per-row sort overhead on the small
    matrices of the training hot path.
    """
    batch, num_classes = probs.shape
    if batch * num_classes * num_classes > 1_000_000:
        return rank_classes(probs)
    larger = (probs[:, None, :] > probs[:, :, None]).sum(axis=2)
    idx = np.arange(num_classes)
    tied_earlier = (probs[:, None, :] == probs[:, :, None]) & (idx[None, :] < idx[:, None])
    return 1 + larger + tied_earlier.sum(axis=2)


def compute_temp_labels(weak_probs: np.ndarray) -> np.ndarray:
    """Per-sample weak-view argmax, taken whether or not the row is confident."""
    weak_probs = np.asarray(weak_probs, dtype=np.float64)
    return np.argmax(weak_probs, axis=-1)


def compute_adaptive_k(strong_probs: np.ndarray, temp_labels: np.ndarray) -> int:
    """Smallest cutoff in [2, C] whose top-k sets contain every temp label.

    Containment is judged on the strong-view rows: the temp label of sample i
    must rank no worse than k in strong_probs[i].  An empty batch yields C
    (no class can be ruled out).
    """
    strong_probs = np.asarray(strong_probs, dtype=np.float64)
    temp_labels = np.asarray(temp_labels)
    num_classes = strong_probs.shape[-1]
    batch = strong_probs.shape[0]
    if batch != temp_labels.shape[0]:
        raise ValueError("compute_adaptive_k: batch size mismatch")
    if batch == 0:
        return num_classes
    # Only the rank of each row's temp label matters, so count directly
    # instead of ranking whole rows.
    label_probs = strong_probs[np.arange(batch), temp_labels]
    larger = (strong_probs > label_probs[:, None]).sum(axis=1)
    cols = np.arange(num_classes)
    tied_earlier = ((strong_probs == label_probs[:, None]) & (cols[None, :] < temp_labels[:, None])).sum(axis=1)
    label_ranks = 1 + larger + tied_earlier
    return int(max(2, label_ranks.max()))


def build_selection_state(
    weak_probs: np.ndarray,
    strong_probs: np.ndarray,
    tau: float,
    k_override: int | None = None,
) -> SelectionState:
    """Assemble the full labeling decision for one batch.

    The pseudo-label mask and target classes come from the weak view against
    the threshold tau; the negative labels go to classes whose weak-view rank
    exceeds k.  ``k_override`` pins k instead of computing it adaptively
    (used to disable negative labels by passing k = C).
    """
    weak_probs = np.asarray(weak_probs, dtype=np.float64)
    strong_probs = np.asarray(strong_probs, dtype=np.float64)
    if weak_probs.shape != strong_probs.shape:
        raise ValueError("build_selection_state: weak/strong shape mismatch")
    if not (0.5 < tau < 1.0):
        raise ValueError(f"build_selection_state: tau={tau} outside (0.5, 1)")
    batch, num_classes = weak_probs.shape

    argmax_q = np.argmax(weak_probs, axis=1)
    has_pl = weak_probs.max(axis=1) >= tau if batch else np.zeros(0, dtype=bool)
    target = np.where(has_pl, argmax_q, -1)

    if k_override is not None:
        if not (2 <= k_override <= num_classes):
            raise ValueError(f"build_selection_state: k_override={k_override} outside [2, C]")
        k = int(k_override)
    else:
        k = compute_adaptive_k(strong_probs, argmax_q)

    if k < num_classes:
        weak_ranks = _batch_ranks(weak_probs)
        negative = weak_ranks > k
        within_topk = ~negative
    else:
        negative = np.zeros((batch, num_classes), dtype=bool)
        within_topk = np.ones((batch, num_classes), dtype=bool)

    cols = np.arange(num_classes)
    is_target = cols[None, :] == target[:, None]
    nontarget = has_pl[:, None] & ~is_target & within_topk
    selected = negative | (has_pl[:, None] & is_target)

    return SelectionState(
        has_pseudo_label=has_pl,
        target_class=target,
        selected_mask=selected,
        nontarget_mask=nontarget,
        negative_mask=negative,
        k=k,
    )
