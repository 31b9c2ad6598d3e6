import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hessae import lasso as l1


def coordinate_descent(X, y, kappa, sweeps=20000, tol=1e-14):
    """Oracle for ||y - Xw||^2 + kappa |w|_1 by exact coordinate minimisation."""
    w = np.zeros(X.shape[1])
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(X.shape[1]):
            r = y - X @ w + X[:, j] * w[j]
            a = X[:, j] @ X[:, j]
            rho = X[:, j] @ r
            new = np.sign(rho) * max(abs(rho) - kappa / 2, 0.0) / a if a > 0 else 0.0
            biggest = max(biggest, abs(new - w[j]))
            w[j] = new
        if biggest < tol:
            break
    return w


def test_soft_threshold_branches():
    assert l1.soft_threshold(1.0, 0.3) == pytest.approx(0.7)
    assert l1.soft_threshold(0.2, 0.3) == 0.0
    assert l1.soft_threshold(-1.0, 0.3) == pytest.approx(-0.7)
    np.testing.assert_allclose(l1.soft_threshold(np.array([1.0, 0.2, -1.0]), 0.3), [0.7, 0, -0.7])
    with pytest.raises(ValueError):
        l1.soft_threshold(1.0, -0.1)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3, 3), st.floats(0.5, 5), st.floats(0, 5))
def test_soft_threshold_is_the_prox(u, M, kappa):
    step = 1e-4
    grid = np.arange(-4.0, 4.0 + step, step)
    obj = 0.5 * M * (grid - u) ** 2 + kappa * np.abs(grid)
    assert abs(l1.soft_threshold(u, kappa / M) - grid[np.argmin(obj)]) <= step


def test_power_iteration_matches_eigvalsh(rng):
    A = rng.normal(size=(6, 6))
    A = A.T @ A
    assert l1.power_iteration(A) == pytest.approx(np.linalg.eigvalsh(A)[-1], rel=1e-9)
    assert l1.power_iteration(np.zeros((3, 3))) == 0.0


def test_power_iteration_close_top_eigenvalues():
    # top pair 1 and 0.997; stopping on the change in lam came out 1.3e-5 low
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(5, 5)))
    A = Q @ np.diag([1.0, 0.997, 0.5, 0.2, 0.1]) @ Q.T
    assert l1.power_iteration(A) == pytest.approx(1.0, rel=1e-9)


def test_kappa_zero_is_least_squares(rng):
    X = rng.normal(size=(10, 3)) * [1.0, 2.0, 0.5] + [3.0, -1.0, 0.0]
    y = rng.normal(size=10)
    w = l1.lasso_pgd(X, y, l1.LassoConfig(0.0, max_iters=100_000, tol=1e-13))
    Z = (X - X.mean(0)) / X.std(0)
    A = np.hstack([Z, np.ones((10, 1))])
    ref = np.linalg.solve(A.T @ A, A.T @ y)[:3]
    np.testing.assert_allclose(w, ref, atol=1e-6)


def test_zero_above_kappa_max(rng):
    X = rng.normal(size=(12, 4))
    y = rng.normal(size=12)
    kmax = 2 * np.max(np.abs(X.T @ y))
    kmax *= 1 + 1e-9  # exactly at the threshold roundoff can leave 1e-17
    state = l1.lasso_pgd_raw(X, y, l1.LassoConfig(kmax))
    np.testing.assert_array_equal(state.w, 0.0)
    np.testing.assert_array_equal(coordinate_descent(X, y, kmax), 0.0)
    # just below the threshold something enters
    assert np.any(l1.lasso_pgd_raw(X, y, l1.LassoConfig(0.9 * kmax)).w != 0)


def test_orthonormal_design_selects_the_generating_column(rng):
    Q, _ = np.linalg.qr(rng.normal(size=(20, 4)))
    y = Q[:, 0].copy()
    state = l1.lasso_pgd_raw(Q, y, l1.LassoConfig(0.1))
    ref = coordinate_descent(Q, y, 0.1)
    np.testing.assert_allclose(state.w, ref, atol=1e-8)
    assert np.flatnonzero(np.abs(state.w) > 1e-10).tolist() == [0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 5))
def test_pgd_matches_coordinate_descent_and_descends(seed, kappa):
    g = np.random.default_rng(seed)
    X = g.normal(size=(15, 4))
    y = g.normal(size=15)
    state = l1.lasso_pgd_raw(X, y, l1.LassoConfig(kappa, max_iters=50_000, tol=1e-12))
    obj = np.array(state.objective)
    assert np.all(np.diff(obj) <= 1e-9 * np.maximum(1.0, np.abs(obj[:-1])))
    assert state.M >= 2 * np.linalg.eigvalsh(X.T @ X)[-1]
    ref = coordinate_descent(X, y, kappa)
    assert l1.lasso_objective(X, y, state.w, kappa) == pytest.approx(
        l1.lasso_objective(X, y, ref, kappa), rel=1e-8, abs=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_support_monotone_in_kappa_on_orthonormal_design(seed):
    g = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(g.normal(size=(12, 5)))
    y = g.normal(size=12)
    prev = None
    for kappa in np.linspace(0.01, 3.0, 12):
        w = l1.lasso_pgd_raw(Q, y, l1.LassoConfig(kappa, max_iters=20_000, tol=1e-13)).w
        support = set(np.flatnonzero(np.abs(w) > 1e-10))
        if prev is not None:
            assert support <= prev
        prev = support


def test_nonfinite_objective_raises():
    X = np.array([[1.0, np.inf]])
    with pytest.raises(FloatingPointError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        l1.lasso_pgd_raw(X, np.array([1.0]), l1.LassoConfig(0.1))


def test_select_support_examples():
    mask = l1.select_support(np.array([0.0, 0.5, 0.0, -0.2]))
    # 1-based {2, 4}
    assert mask.indices.tolist() == [1, 3]
    X = np.arange(8.0).reshape(2, 4)
    mask, reduced = l1.select_support(np.array([0.0, 0.5, 0.0, -0.2]), X)
    np.testing.assert_array_equal(reduced, X[:, [1, 3]])
    with pytest.warns(UserWarning, match="empty lasso support"):
        fallback = l1.select_support(np.zeros(7))
    assert len(fallback.indices) == 2  # ceil(7 / 4)
    W = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 2.0]])
    assert l1.select_support(W).indices.tolist() == [1, 2]


def test_one_vs_rest_union_finds_informative_columns(rng):
    y = np.repeat([1, 2, 3], 30)
    X = rng.normal(size=(90, 6))
    X[:, 1] += 3 * (y == 1)
    X[:, 4] += 3 * (y == 3)
    W = l1.lasso_one_vs_rest(X, y, 3, l1.LassoConfig(kappa=40.0))
    assert W.shape == (3, 6)
    assert {1, 4} <= set(l1.select_support(W).indices.tolist())


def test_choose_kappa_prefers_sparser_on_ties(rng):
    y = np.repeat([1, 2], 20)
    X = rng.normal(size=(40, 5))
    X[:, 0] += 4 * (y == 1)
    kappa, table = l1.choose_kappa(X, y, 2, lambda mask: 1.0)
    assert kappa == max(row[0] for row in table)
    assert len(table) == len(l1.DEFAULT_KAPPA_FACTORS)
