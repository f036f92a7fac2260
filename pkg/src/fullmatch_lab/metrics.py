"""Diagnostics logged during training: selection ratios, negative-label
quality, top-k accuracy, prediction-entropy histograms, and step timing.

Everything here is read-only over model outputs and selection states.  True
labels of unlabeled samples enter only through ``npl_stats``, which is the
one sanctioned diagnostic use of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .labeling import SelectionState, rank_classes
from .mathutils import entropy

METRICS_SCHEMA_VERSION = 1

# Fig-3-style boundary: fraction of predictions below this entropy is a
# headline statistic, so the default bin edges always include it.
LOW_ENTROPY_BOUNDARY = 0.25


@dataclass
class MetricsRecord:
    """One evaluation row; see ``metrics_header`` for the column order."""

    iteration: int
    test_accuracy: float
    pseudo_label_ratio: float
    mean_npl_per_sample: float
    npl_accuracy: float
    k_value: int
    topk_accuracy: dict[int, float] = field(default_factory=dict)
    entropy_histogram: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    step_time: float = 0.0


def pseudo_label_ratio(weak_pool_probs: np.ndarray, tau: float) -> float:
    """Fraction of the pool whose max weak confidence reaches the threshold."""
    weak_pool_probs = np.asarray(weak_pool_probs, dtype=np.float64)
    if weak_pool_probs.shape[0] == 0:
        raise ValueError("pseudo_label_ratio: empty pool")
    return float((weak_pool_probs.max(axis=1) >= tau).mean())


def npl_stats(state: SelectionState, true_labels: np.ndarray) -> tuple[float, float]:
    """Mean negative labels per sample and the fraction that avoid the true class.

    With no negative labels assigned, accuracy is 1.0 by convention (there is
    nothing to get wrong); the count of 0 keeps the case distinguishable.
    """
    true_labels = np.asarray(true_labels)
    mask = state.negative_mask
    if mask.shape[0] == 0:
        return 0.0, 1.0
    total = int(mask.sum())
    mean_count = total / mask.shape[0]
    if total == 0:
        return mean_count, 1.0
    cols = np.arange(mask.shape[1])
    hits_true = mask & (cols[None, :] == true_labels[:, None])
    return mean_count, 1.0 - int(hits_true.sum()) / total


def topk_accuracy(probs: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of samples whose true class ranks within the top k."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if not (1 <= k <= probs.shape[1]):
        raise ValueError(f"topk_accuracy: k={k} outside [1, {probs.shape[1]}]")
    ranks = rank_classes(probs)
    label_ranks = np.take_along_axis(ranks, labels[:, None], axis=1)[:, 0]
    return float((label_ranks <= k).mean())


def entropy_histogram(probs: np.ndarray, bin_edges: np.ndarray) -> np.ndarray:
    """Counts of per-row prediction entropies over the given bins.

    Edges must be strictly increasing and cover [0, ln C].  Values are
    clipped into the edge range, so the counts always sum to the number of
    rows.
    """
    probs = np.asarray(probs, dtype=np.float64)
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or not np.all(np.diff(edges) > 0):
        raise ValueError("entropy_histogram: bin edges must be strictly increasing")
    max_entropy = np.log(probs.shape[1])
    if edges[0] > 0.0 or edges[-1] + 1e-12 < max_entropy:
        raise ValueError("entropy_histogram: edges must cover [0, ln C]")
    values = np.clip(entropy(probs), edges[0], edges[-1])
    counts, _ = np.histogram(values, bins=edges)
    return counts.astype(np.int64)


def step_timer(durations) -> float:
    """Arithmetic mean of the step durations in one logging window."""
    durations = np.asarray(durations, dtype=np.float64)
    if durations.size == 0:
        raise ValueError("step_timer: need at least one duration")
    return float(durations.mean())


def default_entropy_bin_edges(num_classes: int) -> np.ndarray:
    """0.25-wide bins from 0 up past ln C (so the 0.25 boundary is an edge)."""
    top = np.log(num_classes)
    n_bins = int(np.ceil(top / LOW_ENTROPY_BOUNDARY))
    return LOW_ENTROPY_BOUNDARY * np.arange(n_bins + 1)


def default_topk_list(num_classes: int) -> list[int]:
    """A mid cutoff and a C-1 cutoff, the two curves worth watching."""
    ks = {min(num_classes, max(2, num_classes // 2)), max(2, num_classes - 1)}
    return sorted(ks)


def metrics_header(topk_list, num_bins: int) -> list[str]:
    cols = [
        "iteration",
        "test_accuracy",
        "pseudo_label_ratio",
        "mean_npl_per_sample",
        "npl_accuracy",
        "k_value",
    ]
    cols += [f"top{k}_accuracy" for k in topk_list]
    cols += [f"entropy_bin_{i}" for i in range(num_bins)]
    return cols


def record_to_row(record: MetricsRecord, topk_list) -> list[str]:
    row = [
        str(int(record.iteration)),
        repr(float(record.test_accuracy)),
        repr(float(record.pseudo_label_ratio)),
        repr(float(record.mean_npl_per_sample)),
        repr(float(record.npl_accuracy)),
        str(int(record.k_value)),
    ]
    row += [repr(float(record.topk_accuracy[k])) for k in topk_list]
    row += [str(int(c)) for c in record.entropy_histogram]
    return row


def write_metrics_csv(path, records: list[MetricsRecord], topk_list, num_bins: int) -> None:
    """Comma-delimited metrics log: header row, then one row per evaluation.

    Timing lives in a separate file (see the trainer) so this file is
    byte-identical across reruns of the same config and seed.
    """
    lines = [",".join(metrics_header(topk_list, num_bins))]
    for rec in records:
        lines.append(",".join(record_to_row(rec, topk_list)))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_timings_csv(path, records: list[MetricsRecord]) -> None:
    """Wall-clock companion file: mean step seconds per evaluation window."""
    lines = ["iteration,mean_step_seconds"]
    for rec in records:
        lines.append(f"{rec.iteration},{repr(float(rec.step_time))}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
