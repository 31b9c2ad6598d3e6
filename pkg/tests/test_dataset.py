import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessae.dataset import (Dataset, DatasetError, bagging_sample, load_table, make_ad_surrogate,
                            normalize_minmax, stratified_holdout_split)

from conftest import DATA, write_csv


@pytest.mark.parametrize("name, shape", [("pendigits", (10992, 16, 10)), ("statlog", (6435, 36, 6))])
def test_bundled_tables_have_published_shapes(name, shape):
    d = load_table(DATA / f"{name}.csv")
    assert (d.n_samples, d.n_features, d.n_classes) == shape
    assert set(np.unique(d.labels)) == set(range(1, shape[2] + 1))


def test_load_header_and_named_label(tmp_path):
    p = write_csv(tmp_path / "t.csv", [["a", "cls", "b"], [1, "x", 2], [3, "y", 4], [5, "x", 6]])
    d = load_table(p, "cls")
    assert d.feature_ids == ("a", "b")
    np.testing.assert_array_equal(d.features, [[1, 2], [3, 4], [5, 6]])
    np.testing.assert_array_equal(d.labels, [1, 2, 1])


def test_labels_remapped_in_sorted_order(tmp_path):
    p = write_csv(tmp_path / "t.csv", [[0.1, 7], [0.2, 3], [0.3, 10]])
    d = load_table(p)
    # numeric order, not string order ("10" < "3")
    np.testing.assert_array_equal(d.labels, [2, 1, 3])
    assert d.class_names == ("3", "7", "10")


def test_label_column_by_index(tmp_path):
    p = write_csv(tmp_path / "t.csv", [[2, 0.5, 0.6], [1, 0.1, 0.2]])
    d = load_table(p, 0)
    np.testing.assert_array_equal(d.labels, [2, 1])
    assert d.n_features == 2


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_table(tmp_path / "missing.csv")
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(DatasetError, match="empty table"):
        load_table(tmp_path / "empty.csv")
    bad = write_csv(tmp_path / "bad.csv", [[1, 2, 1], [1, "oops", 2]])
    with pytest.raises(DatasetError, match="non-numeric"):
        load_table(bad)
    one = write_csv(tmp_path / "one.csv", [[1, 2, 5], [3, 4, 5]])
    with pytest.raises(DatasetError, match="single-class"):
        load_table(one)


def test_dataset_rejects_non_finite():
    with pytest.raises(DatasetError):
        Dataset(np.array([[np.nan]]), np.array([1]))


def test_normalize_examples():
    train = Dataset(np.array([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]]), np.array([1, 2, 1]))
    test = Dataset(np.array([[12.0, 3.0], [-1.0, 9.0]]), np.array([1, 2]))
    tr, te, stats = normalize_minmax(train, test)
    np.testing.assert_array_equal(tr.features[:, 0], [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(tr.features[:, 1], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(te.features, [[1.0, 0.0], [0.0, 0.0]])
    assert np.all(stats.maximum >= stats.minimum)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_normalize_idempotent(seed):
    g = np.random.default_rng(seed)
    X = g.normal(size=(int(g.integers(2, 30)), int(g.integers(1, 6)))) * 10
    d = Dataset(X, np.arange(X.shape[0]) % 2 + 1)
    once, _, _ = normalize_minmax(d)
    twice, _, _ = normalize_minmax(once)
    assert once.features.min() >= 0 and once.features.max() <= 1
    np.testing.assert_allclose(twice.features, once.features, atol=1e-12)


def test_split_ad_shape():
    d = make_ad_surrogate()
    assert (d.n_samples, d.n_features, d.n_classes) == (90, 32, 3)
    tr, te = stratified_holdout_split(d, 1 / 3, seed=0)
    assert (tr.n_samples, te.n_samples) == (60, 30)
    np.testing.assert_array_equal(te.class_counts(), [10, 10, 10])


def test_split_deterministic_and_lossless():
    d = make_ad_surrogate(seed=3)
    a_tr, a_te = stratified_holdout_split(d, 0.3, seed=11)
    b_tr, b_te = stratified_holdout_split(d, 0.3, seed=11)
    np.testing.assert_array_equal(a_te.row_ids, b_te.row_ids)
    merged = np.sort(np.concatenate([a_tr.row_ids, a_te.row_ids]))
    np.testing.assert_array_equal(merged, np.arange(d.n_samples))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=2, max_size=5), st.floats(0.05, 0.95), st.integers(0, 99))
def test_split_counts_round_per_class(sizes, frac, seed):
    y = np.repeat(np.arange(1, len(sizes) + 1), sizes)
    d = Dataset(np.zeros((len(y), 1)), y)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tr, te = stratified_holdout_split(d, frac, seed)
    for c, n_c in enumerate(sizes, start=1):
        want = int(np.floor(n_c * frac + 0.5))
        want = min(want, n_c - 1)
        assert np.sum(te.labels == c) == max(want, 0)
    assert len(np.intersect1d(tr.row_ids, te.row_ids)) == 0
    assert tr.n_samples + te.n_samples == d.n_samples


def test_split_singleton_class_stays_in_train():
    d = Dataset(np.arange(7.0).reshape(-1, 1), np.array([1, 1, 1, 2, 2, 2, 3]))
    with pytest.warns(UserWarning, match="class 3"):
        tr, te = stratified_holdout_split(d, 1 / 3, seed=0)
    assert 3 in tr.labels and 3 not in te.labels


def test_bagging_sizes():
    g = np.random.default_rng(0)
    d = Dataset(g.random((100, 40)), np.arange(100) % 4 + 1)
    bag = bagging_sample(d, 0.7, 0.5, seed=1)
    assert len(bag.sample_indices) == 70 and len(bag.feature_indices) == 20
    assert len(np.unique(bag.sample_indices)) == 70
    assert np.all(np.diff(bag.feature_indices) > 0)
    # stratified: 70 rows over 4 classes of 25
    np.testing.assert_array_equal(np.bincount(d.labels[bag.sample_indices])[1:], [18, 18, 17, 17])


def test_bagging_identity_and_randomness():
    g = np.random.default_rng(0)
    d = Dataset(g.random((30, 8)), np.arange(30) % 3 + 1)
    full = bagging_sample(d, 1.0, 1.0, seed=5)
    np.testing.assert_array_equal(full.sample_indices, np.arange(30))
    np.testing.assert_array_equal(full.feature_indices, np.arange(8))
    first = bagging_sample(d, 0.5, 0.5, seed=0).feature_indices
    assert any(not np.array_equal(first, bagging_sample(d, 0.5, 0.5, seed=s).feature_indices)
               for s in range(1, 101))


def test_bagging_reproducible():
    d = make_ad_surrogate()
    a = bagging_sample(d, 0.7, 0.5, seed=9)
    b = bagging_sample(d, 0.7, 0.5, seed=9)
    assert a.sample_indices.tobytes() == b.sample_indices.tobytes()
    assert a.feature_indices.tobytes() == b.feature_indices.tobytes()


def test_bagging_redraws_then_fails():
    # 1 sample of class 2 out of 50: a 1-row draw can only ever hold one class
    d = Dataset(np.zeros((50, 2)), np.array([1] * 49 + [2]))
    with pytest.raises(DatasetError, match="fewer than 2 classes"):
        bagging_sample(d, 0.02, 1.0, seed=0)
