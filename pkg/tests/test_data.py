"""Synthetic datasets, splits, and batch iteration."""

import itertools

import numpy as np
import pytest

from fullmatch_lab.data import (
    batch_iterator,
    export_dataset,
    generate,
    import_dataset,
    split_dataset,
)


class TestGenerate:
    def test_blobs_zero_noise_sit_on_centroids(self):
        ds = generate("gaussian_blobs", 4, 120, 0.0, seed=0)
        # every class collapses to a single point
        for cls in range(4):
            pts = ds.features[ds.true_labels == cls]
            assert np.ptp(pts, axis=0).max() == 0.0

    def test_same_seed_is_identical(self):
        a = generate("gaussian_blobs", 3, 90, 0.2, seed=5)
        b = generate("gaussian_blobs", 3, 90, 0.2, seed=5)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.true_labels, b.true_labels)

    def test_balanced_classes(self):
        ds = generate("gaussian_blobs", 4, 122, 0.1, seed=1)
        counts = np.bincount(ds.true_labels, minlength=4)
        assert counts.max() - counts.min() <= 1

    def test_nearest_centroid_oracle_on_separated_blobs(self):
        # centroid spacing 3; sigma = 0.5 puts neighbors 6 sigma apart
        ds = generate("gaussian_blobs", 4, 2000, 0.5, seed=2)
        centroids = np.stack(
            [ds.features[ds.true_labels == c].mean(axis=0) for c in range(4)]
        )
        d = ((ds.features[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        pred = d.argmin(axis=1)
        assert (pred == ds.true_labels).mean() >= 0.99

    def test_two_moons_only_two_classes(self):
        with pytest.raises(ValueError):
            generate("two_moons", 3, 100, 0.1, seed=0)
        ds = generate("two_moons", 2, 100, 0.0, seed=0)
        assert ds.num_classes == 2 and ds.dim == 2

    def test_rings_radii_match_classes(self):
        ds = generate("concentric_rings", 3, 120, 0.0, seed=3)
        radii = np.linalg.norm(ds.features, axis=1)
        for cls in range(3):
            np.testing.assert_allclose(radii[ds.true_labels == cls], cls + 1.0, rtol=1e-12)

    def test_rejects_bad_requests(self):
        with pytest.raises(ValueError):
            generate("mystery", 3, 100, 0.1, seed=0)
        with pytest.raises(ValueError):
            generate("gaussian_blobs", 3, 20, 0.1, seed=0)  # N < 10 C
        with pytest.raises(ValueError):
            generate("gaussian_blobs", 3, 100, -0.1, seed=0)

    def test_blob_centroids_equidistant_when_dims_allow(self):
        ds = generate("gaussian_blobs", 3, 90, 0.0, seed=0, dim=5)
        assert ds.dim == 5
        cents = np.stack([ds.features[ds.true_labels == c][0] for c in range(3)])
        dists = [np.linalg.norm(cents[a] - cents[b]) for a in range(3) for b in range(a + 1, 3)]
        np.testing.assert_allclose(dists, 3.0, rtol=1e-10)


class TestSplit:
    def test_spec_arithmetic(self):
        ds = generate("gaussian_blobs", 4, 2400, 0.3, seed=0)
        tagged = split_dataset(ds, labels_per_class=4, test_fraction=1 / 6, seed=1)
        assert tagged.indices_of("labeled").size == 16
        assert tagged.indices_of("unlabeled").size == 1984
        assert tagged.indices_of("test").size == 400

    def test_degenerate_split_empties_unlabeled(self):
        ds = generate("gaussian_blobs", 2, 40, 0.1, seed=0)
        # per class: 20 samples, 2 test, 18 labeled
        tagged = split_dataset(ds, labels_per_class=18, test_fraction=0.1, seed=0)
        assert tagged.indices_of("unlabeled").size == 0

    def test_two_seeds_differ_but_same_sizes(self):
        ds = generate("gaussian_blobs", 4, 400, 0.3, seed=0)
        a = split_dataset(ds, 4, 0.25, seed=1)
        b = split_dataset(ds, 4, 0.25, seed=2)
        assert a.indices_of("labeled").size == b.indices_of("labeled").size == 16
        assert set(a.indices_of("labeled")) != set(b.indices_of("labeled"))

    def test_splits_disjoint_and_exhaustive(self):
        ds = generate("two_moons", 2, 200, 0.1, seed=3)
        tagged = split_dataset(ds, 5, 0.2, seed=4)
        lab = set(tagged.indices_of("labeled"))
        unlab = set(tagged.indices_of("unlabeled"))
        test = set(tagged.indices_of("test"))
        assert lab | unlab | test == set(range(200))
        assert not (lab & unlab or lab & test or unlab & test)

    def test_labeled_split_is_class_balanced(self):
        ds = generate("gaussian_blobs", 4, 400, 0.3, seed=5)
        tagged = split_dataset(ds, 7, 0.25, seed=6)
        labels = tagged.true_labels[tagged.indices_of("labeled")]
        assert all(np.sum(labels == c) == 7 for c in range(4))

    def test_every_class_has_test_samples(self):
        ds = generate("gaussian_blobs", 4, 400, 0.3, seed=7)
        tagged = split_dataset(ds, 4, 1 / 6, seed=8)
        test_labels = tagged.true_labels[tagged.indices_of("test")]
        assert set(test_labels) == {0, 1, 2, 3}

    def test_infeasible_counts_rejected(self):
        ds = generate("gaussian_blobs", 2, 40, 0.1, seed=0)
        with pytest.raises(ValueError):
            split_dataset(ds, labels_per_class=19, test_fraction=0.1, seed=0)
        with pytest.raises(ValueError):
            split_dataset(ds, labels_per_class=1, test_fraction=0.001, seed=0)


def tagged_dataset(seed=0):
    ds = generate("gaussian_blobs", 4, 400, 0.3, seed=seed)
    return split_dataset(ds, 4, 0.25, seed=seed)


class TestBatchIterator:
    def test_full_pool_batch_covers_epoch(self):
        ds = tagged_dataset()
        pool = ds.indices_of("unlabeled")
        it = batch_iterator(ds, 4, pool.size, seed=0)
        _, unlab = next(it)
        assert sorted(unlab) == sorted(pool)

    def test_same_seed_same_sequence(self):
        ds = tagged_dataset()
        a = batch_iterator(ds, 4, 32, seed=9)
        b = batch_iterator(ds, 4, 32, seed=9)
        for _ in range(10):
            la, ua = next(a)
            lb, ub = next(b)
            np.testing.assert_array_equal(la, lb)
            np.testing.assert_array_equal(ua, ub)

    def test_epoch_visits_each_unlabeled_sample_once(self):
        ds = tagged_dataset()
        pool = ds.indices_of("unlabeled")
        batch = 32
        n_batches = -(-pool.size // batch)
        it = batch_iterator(ds, 4, batch, seed=2)
        seen = list(
            itertools.chain.from_iterable(unlab for _, unlab in itertools.islice(it, n_batches))
        )
        assert sorted(seen) == sorted(pool)

    def test_labeled_batches_have_fixed_size(self):
        ds = tagged_dataset()
        it = batch_iterator(ds, 5, 32, seed=3)
        for _ in range(20):
            lab, _ = next(it)
            assert lab.size == 5
            assert all(ds.split[i] == 0 for i in lab)

    def test_rejects_bad_sizes(self):
        ds = tagged_dataset()
        with pytest.raises(ValueError):
            batch_iterator(ds, 0, 8, seed=0)


class TestExportImport:
    def test_round_trip_bytes(self, tmp_path):
        ds = tagged_dataset(seed=11)
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        export_dataset(ds, p1)
        again = import_dataset(p1)
        export_dataset(again, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_values(self, tmp_path):
        ds = tagged_dataset(seed=12)
        path = tmp_path / "ds.txt"
        export_dataset(ds, path)
        back = import_dataset(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.true_labels, ds.true_labels)
        np.testing.assert_array_equal(back.split, ds.split)
        assert back.num_classes == ds.num_classes

    def test_import_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2\n")
        with pytest.raises(ValueError):
            import_dataset(path)
