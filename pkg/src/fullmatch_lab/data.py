"""Synthetic classification datasets, splits, and deterministic batching.

Three generators with controlled difficulty: Gaussian blobs on a circle
(any class count; the noise knob is the blob sigma relative to a unit
centroid spacing), the classic two-moons layout (two classes), and
concentric rings (one ring per class).  True labels are kept for every
sample, including unlabeled ones, but only the metrics layer may read them;
the training losses never see an unlabeled label by construction.

Datasets round-trip through a plain text format: a ``N D C`` header line,
then one line per sample holding D feature values, the true label, and the
split tag.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

GENERATOR_KINDS = ("gaussian_blobs", "two_moons", "concentric_rings")
SPLIT_TAGS = ("labeled", "unlabeled", "test")


@dataclass
class Dataset:
    """Features, true labels, and per-sample split tags.

    ``split`` holds indices into SPLIT_TAGS; a freshly generated dataset is
    entirely unlabeled until ``split_dataset`` tags it.
    """

    features: np.ndarray
    true_labels: np.ndarray
    split: np.ndarray
    num_classes: int

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def indices_of(self, tag: str) -> np.ndarray:
        return np.flatnonzero(self.split == SPLIT_TAGS.index(tag))


# Distance between nearest blob centroids.  The noise argument of
# ``generate`` is the blob sigma in the same units, so noise = 1 puts the
# nearest classes three sigma apart.
BLOB_SEPARATION = 3.0

# Seeds the fixed centroid directions; part of the task geometry, shared by
# every dataset seed.
_GEOMETRY_SEED = 716253


def _blob_centroids(num_classes: int, dim: int) -> np.ndarray:
    """Class centers with BLOB_SEPARATION between nearest neighbors.

    With enough dimensions the centers sit along orthonormal directions, so
    every class is equidistant from every other and its evidence is spread
    over all coordinates (coordinate dropout then hides part of the evidence
    instead of destroying the class).  With more classes than dimensions
    they fall back to a circle in the first two coordinates.
    """
    if num_classes <= dim:
        rng = np.random.default_rng(_GEOMETRY_SEED)
        basis, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        directions = basis[:, :num_classes].T
        return (BLOB_SEPARATION / np.sqrt(2.0)) * directions
    radius = BLOB_SEPARATION * (0.5 if num_classes == 2 else 1.0 / (2.0 * np.sin(np.pi / num_classes)))
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    centers = np.zeros((num_classes, dim))
    centers[:, 0] = radius * np.cos(angles)
    centers[:, 1] = radius * np.sin(angles)
    return centers


def _balanced_counts(total: int, num_classes: int) -> np.ndarray:
    counts = np.full(num_classes, total // num_classes)
    counts[: total % num_classes] += 1
    return counts


def generate(kind: str, num_classes: int, num_samples: int, noise: float, seed: int, dim: int = 2) -> Dataset:
    """Build a class-balanced dataset, deterministic in the seed."""
    if kind not in GENERATOR_KINDS:
        raise ValueError(f"generate: unknown kind {kind!r}")
    if num_classes < 2:
        raise ValueError("generate: need at least 2 classes")
    if num_samples < 10 * num_classes:
        raise ValueError(f"generate: need at least {10 * num_classes} samples for C={num_classes}")
    if noise < 0:
        raise ValueError("generate: noise must be non-negative")
    if kind == "two_moons" and num_classes != 2:
        raise ValueError("generate: two_moons supports exactly 2 classes")
    if kind in ("two_moons", "concentric_rings") and dim != 2:
        raise ValueError(f"generate: {kind} is two-dimensional")
    if dim < 2:
        raise ValueError("generate: dim must be >= 2")

    rng = np.random.default_rng(seed)
    counts = _balanced_counts(num_samples, num_classes)
    labels = np.repeat(np.arange(num_classes), counts)

    if kind == "gaussian_blobs":
        centers = _blob_centroids(num_classes, dim)
        features = centers[labels] + rng.normal(0.0, noise, size=(num_samples, dim)) if noise > 0 else centers[labels].copy()
    elif kind == "two_moons":
        t = rng.uniform(0.0, np.pi, size=num_samples)
        upper = np.stack([np.cos(t), np.sin(t)], axis=1)
        lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
        features = np.where((labels == 0)[:, None], upper, lower)
        features = features + rng.normal(0.0, noise, size=features.shape)
    else:
        theta = rng.uniform(0.0, 2.0 * np.pi, size=num_samples)
        radii = labels + 1.0
        features = np.stack([radii * np.cos(theta), radii * np.sin(theta)], axis=1)
        features = features + rng.normal(0.0, noise, size=features.shape)

    perm = rng.permutation(num_samples)
    return Dataset(
        features=features[perm],
        true_labels=labels[perm],
        split=np.full(num_samples, SPLIT_TAGS.index("unlabeled"), dtype=np.int8),
        num_classes=num_classes,
    )


def split_dataset(dataset: Dataset, labels_per_class: int, test_fraction: float, seed: int) -> Dataset:
    """Tag samples as labeled / unlabeled / test, class-balanced where possible.

    Per class: a test_fraction share goes to the test split, the next
    labels_per_class samples become labeled, and the remainder is unlabeled.
    """
    if labels_per_class < 1:
        raise ValueError("split_dataset: labels_per_class must be >= 1")
    if not (0.0 < test_fraction < 1.0):
        raise ValueError("split_dataset: test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    split = np.full(dataset.num_samples, SPLIT_TAGS.index("unlabeled"), dtype=np.int8)
    for cls in range(dataset.num_classes):
        members = np.flatnonzero(dataset.true_labels == cls)
        n_test = int(round(members.size * test_fraction))
        if n_test < 1:
            raise ValueError(f"split_dataset: class {cls} would get no test samples")
        if n_test + labels_per_class > members.size:
            raise ValueError(
                f"split_dataset: class {cls} has {members.size} samples, cannot take "
                f"{n_test} test + {labels_per_class} labeled"
            )
        members = members[rng.permutation(members.size)]
        split[members[:n_test]] = SPLIT_TAGS.index("test")
        split[members[n_test : n_test + labels_per_class]] = SPLIT_TAGS.index("labeled")
    return Dataset(
        features=dataset.features,
        true_labels=dataset.true_labels,
        split=split,
        num_classes=dataset.num_classes,
    )


def batch_iterator(
    dataset: Dataset, batch_labeled: int, batch_unlabeled: int, seed
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless stream of (labeled indices, unlabeled indices) pairs.

    The unlabeled pool is reshuffled once per epoch and consumed exactly once
    per epoch (the final batch of an epoch may be short).  The tiny labeled
    pool cycles on its own independent stream.
    """
    if batch_labeled < 1 or batch_unlabeled < 1:
        raise ValueError("batch_iterator: batch sizes must be >= 1")
    labeled = dataset.indices_of("labeled")
    unlabeled = dataset.indices_of("unlabeled")
    if labeled.size == 0:
        raise ValueError("batch_iterator: no labeled samples")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    lab_rng, unlab_rng = (np.random.default_rng(child) for child in ss.spawn(2))

    def labeled_batches() -> Iterator[np.ndarray]:
        while True:
            order = labeled[lab_rng.permutation(labeled.size)]
            for start in range(0, order.size, batch_labeled):
                chunk = order[start : start + batch_labeled]
                while chunk.size < batch_labeled:
                    order2 = labeled[lab_rng.permutation(labeled.size)]
                    chunk = np.concatenate([chunk, order2[: batch_labeled - chunk.size]])
                yield chunk

    def unlabeled_batches() -> Iterator[np.ndarray]:
        while True:
            if unlabeled.size == 0:
                yield unlabeled
                continue
            order = unlabeled[unlab_rng.permutation(unlabeled.size)]
            for start in range(0, order.size, batch_unlabeled):
                yield order[start : start + batch_unlabeled]

    def paired() -> Iterator[tuple[np.ndarray, np.ndarray]]:
        lab_stream = labeled_batches()
        unlab_stream = unlabeled_batches()
        while True:
            yield next(lab_stream), next(unlab_stream)

    return paired()


def export_dataset(dataset: Dataset, path) -> None:
    """Write the documented text format (header, then one line per sample)."""
    lines = [f"{dataset.num_samples} {dataset.dim} {dataset.num_classes}"]
    for i in range(dataset.num_samples):
        feats = " ".join(repr(float(v)) for v in dataset.features[i])
        tag = SPLIT_TAGS[dataset.split[i]]
        lines.append(f"{feats} {dataset.true_labels[i]} {tag}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def import_dataset(path) -> Dataset:
    """Read a file written by ``export_dataset``."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"import_dataset: {path} is empty")
    header = lines[0].split()
    if len(header) != 3:
        raise ValueError("import_dataset: header must be 'N D C'")
    n, dim, num_classes = (int(tok) for tok in header)
    if len(lines) != n + 1:
        raise ValueError(f"import_dataset: expected {n} sample lines, found {len(lines) - 1}")
    features = np.zeros((n, dim))
    labels = np.zeros(n, dtype=np.int64)
    split = np.zeros(n, dtype=np.int8)
    for i, line in enumerate(lines[1:]):
        toks = line.split()
        if len(toks) != dim + 2:
            raise ValueError(f"import_dataset: bad sample line {i}")
        features[i] = [float(t) for t in toks[:dim]]
        labels[i] = int(toks[dim])
        split[i] = SPLIT_TAGS.index(toks[dim + 1])
    return Dataset(features=features, true_labels=labels, split=split, num_classes=num_classes)
