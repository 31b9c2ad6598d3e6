import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessae import model as hm
from hessae import neural as nn
from hessae.dataset import Dataset, make_ad_surrogate, normalize_minmax

FAST = nn.TrainConfig(epochs=8)
SPARSE = nn.SparsityConfig(0.05, 3.0, 1e-4)


def _columns_with_variances(var, n_rows=6, seed=0):
    g = np.random.default_rng(seed)
    Z = g.normal(size=(n_rows, len(var)))
    Z = (Z - Z.mean(0)) / Z.std(0, ddof=1)
    return Z * np.sqrt(var)


def test_embedding_variance_example():
    M = _columns_with_variances([2.0, 0.5, 3.0])
    unit = hm.build_embedding(M, 2)
    # 1-based (3, 1)
    assert unit.selected.tolist() == [2, 0]


def test_embedding_full_and_ties():
    M = _columns_with_variances([1.0, 4.0, 2.0])
    full = hm.build_embedding(M, 3)
    assert sorted(full.selected.tolist()) == [0, 1, 2]
    assert full.selected.tolist() == [1, 2, 0]
    # shifted integer columns: variances tie exactly
    eq = np.array([[0.0, 5.0, 9.0], [1.0, 6.0, 10.0], [2.0, 7.0, 11.0]])
    assert hm.build_embedding(eq, 2).selected.tolist() == [0, 1]
    with pytest.raises(ValueError):
        hm.build_embedding(M, 4)


def test_embedding_unit_validates_indices():
    with pytest.raises(ValueError):
        hm.EmbeddingUnit(np.array([0, 0]), 2, 1)
    with pytest.raises(ValueError):
        hm.EmbeddingUnit(np.array([3]), 2, 1)


def test_apply_embedding_semantics():
    unit = hm.EmbeddingUnit(np.array([2, 0]), 2, 1)
    x, h = np.array([10.0, 20.0]), np.array([30.0])
    np.testing.assert_array_equal(hm.apply_embedding(unit, x, h), [30.0, 10.0])
    ident = hm.EmbeddingUnit(np.arange(3), 2, 1)
    np.testing.assert_array_equal(hm.apply_embedding(ident, x, h), [10.0, 20.0, 30.0])
    with pytest.raises(ValueError):
        hm.apply_embedding(unit, x, np.array([1.0, 2.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_g_matrix_algebra_and_one_hot_columns(seed):
    g = np.random.default_rng(seed)
    n, d = int(g.integers(1, 6)), int(g.integers(1, 6))
    M = g.normal(size=(8, n + d))
    unit = hm.build_embedding(M, int(g.integers(1, n + d + 1)), n_original=n)
    G = unit.matrix()
    assert np.all(G.sum(axis=0) == 1) and np.all(G.sum(axis=1) <= 1)
    x, h = g.normal(size=n), g.normal(size=d)
    np.testing.assert_array_equal(G.T @ np.concatenate([x, h]), hm.apply_embedding(unit, x, h))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_embedding_maximises_trace_bruteforce(seed):
    g = np.random.default_rng(seed)
    width = int(g.integers(2, 9))
    d_out = int(g.integers(1, width + 1))
    M = g.normal(size=(10, width)) * g.uniform(0.1, 2, width)
    cov = np.cov(M, rowvar=False)
    G = hm.build_embedding(M, d_out).matrix()
    best = max(np.trace(cov[np.ix_(s, s)]) for s in itertools.combinations(range(width), d_out))
    assert np.trace(G.T @ cov @ G) >= best - 1e-12


def _small_data(seed=0):
    train = make_ad_surrogate(seed=seed, n_per_class=20, n_features=8, separation=1.5)
    return normalize_minmax(train)[0]


def test_pretrain_shape_chain():
    data = _small_data()
    m = hm.pretrain(data, (12, 6, 3), SPARSE, FAST, np.random.default_rng(0))
    assert [e.d_out for e in m.encoders] == [12, 6, 3]
    assert m.encoders[0].d_in == 8
    for k in (1, 2):
        unit = m.embedding_units[k - 1]
        assert unit.d_out == m.arch[k - 1] == m.encoders[k].d_in
        assert (unit.n_original, unit.n_hidden) == (8, m.arch[k - 1])
    codes = hm.hidden_codes(m, data.features)
    assert codes[-1].shape == (data.n_samples, 3)


def test_statlog_arch_gives_twenty_deep_columns():
    g = np.random.default_rng(0)
    data = Dataset(g.random((40, 36)), np.arange(40) % 6 + 1)
    m = hm.pretrain(data, (120, 60, 20), SPARSE, nn.TrainConfig(epochs=1), g)
    assert hm.extract_deep_features(m, data).shape == (40, 20)


def test_single_layer_equals_plain_sparse_autoencoder():
    data = _small_data()
    a = hm.pretrain(data, (5,), SPARSE, FAST, np.random.default_rng(3), embed=True)
    b = hm.pretrain(data, (5,), SPARSE, FAST, np.random.default_rng(3), embed=False)
    assert a.embedding_units == [] and b.embedding_units == []
    assert a.encoders[0].weights.tobytes() == b.encoders[0].weights.tobytes()


def test_pretrain_losses_do_not_increase():
    data = _small_data()
    m = hm.pretrain(data, (10, 6, 4), SPARSE, nn.TrainConfig(epochs=20), np.random.default_rng(0))
    for hist in m.pretrain_history:
        assert hist.losses[-1] <= hist.losses[0]


def test_input_rescaling_is_folded_exactly(rng):
    enc = nn.init_layer(3, 2, rng)
    M = rng.random((10, 3)) * [5.0, 1.0, 0.0] + [1.0, -2.0, 7.0]
    scaled, lo, span = hm._rescale_columns(M)
    folded = hm._fold_input_scaling(enc, lo, span)
    np.testing.assert_allclose(nn.forward(folded, M), nn.forward(enc, scaled), atol=1e-12)


def test_finetune_freezes_embedding_and_lowers_cross_entropy():
    data = _small_data(1)
    rng = np.random.default_rng(0)
    pre = hm.pretrain(data, (10, 6, 4), SPARSE, FAST, rng)
    before = [u.selected.copy() for u in pre.embedding_units]
    tuned = hm.finetune(pre, data, nn.TrainConfig(epochs=30, learning_rate=0.01), rng)
    after = [u.selected for u in tuned.embedding_units]
    for a, b in zip(before, after):
        np.testing.assert_array_equal(a, b)
    hist = tuned.finetune_history
    assert hist.losses[-1] <= hist.losses[0]
    assert hm.training_cross_entropy(tuned, data) == pytest.approx(hist.losses[-1])


def test_deep_features_range_and_determinism():
    data = _small_data(2)
    m = hm.train_hessae(data, (6, 4), SPARSE, FAST, FAST, seed=5)
    A = hm.extract_deep_features(m, data)
    B = hm.extract_deep_features(m, data)
    assert A.shape == (data.n_samples, 4)
    assert np.all((A > 0) & (A < 1))
    assert A.tobytes() == B.tobytes()
    m2 = hm.train_hessae(data, (6, 4), SPARSE, FAST, FAST, seed=5)
    for e1, e2 in zip(m.encoders, m2.encoders):
        assert e1.weights.tobytes() == e2.weights.tobytes()
    with pytest.raises(ValueError):
        hm.extract_deep_features(m, data.features[:, :5])


def test_hybrid_features():
    X = np.arange(32.0).reshape(2, 16)
    D = np.ones((2, 10))
    H = hm.hybrid_features(X, D)
    assert H.shape == (2, 26)
    np.testing.assert_array_equal(H[:, :16], X)
    np.testing.assert_array_equal(hm.hybrid_features(X, np.zeros((2, 0))), X)
    with pytest.raises(ValueError):
        hm.hybrid_features(X, np.ones((3, 10)))
