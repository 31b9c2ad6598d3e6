"""Weighted locality-preserving discriminant projection (w-LPPD).

Rows are samples throughout, so the graph term ``X L X^T`` of the column
convention appears here as ``X.T @ L @ X``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ._backend import USE_NUMBA, njit


@dataclass
class LocalScatter:
    between: np.ndarray  # S_LB
    within: np.ndarray  # S_LW
    global_center: np.ndarray  # mu_lb after re-centring on the kept samples
    between_centers: np.ndarray  # mu_lbc, one row per class (nan when absent)
    within_centers: np.ndarray  # mu_lwc
    k_m: int
    k_mc: np.ndarray
    n_local: np.ndarray  # N_lc
    within_rows: np.ndarray  # indices used for S_LW
    between_rows: np.ndarray  # indices used for S_LB


def _nearest(X: np.ndarray, center: np.ndarray, k: int) -> np.ndarray:
    d = np.sum((X - center) ** 2, axis=1)
    return np.argsort(d, kind="stable")[:k]


def local_scatter(X, y, r_b: float, r_w: float, n_classes: int | None = None) -> LocalScatter:
    """Between/within scatter restricted to the samples nearest their centres.

    Per class the ``floor(r_w N_c)`` samples closest to the class mean form the
    within-class part. Globally the ``floor(r_b N)`` samples closest to the
    overall mean are kept, the centre is recomputed over them once, and the
    between-class scatter uses their per-class means.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if not (0 < r_b <= 1 and 0 < r_w <= 1):
        raise ValueError("r_b and r_w must lie in (0, 1]")
    n_classes = n_classes or int(y.max())
    N, d = X.shape
    S_w = np.zeros((d, d))
    mu_w = np.full((n_classes, d), np.nan)
    k_mc = np.zeros(n_classes, dtype=np.int64)
    within_rows = []
    for c in range(1, n_classes + 1):
        members = np.flatnonzero(y == c)
        if members.size == 0:
            continue
        k = int(math.floor(r_w * members.size + 1e-9))
        if k == 0:
            raise ValueError(f"class {c}: r_w={r_w} keeps no samples of {members.size}")
        keep = members[_nearest(X[members], X[members].mean(axis=0), k)]
        mu = X[keep].mean(axis=0)
        D = X[keep] - mu
        S_w += D.T @ D
        mu_w[c - 1] = mu
        k_mc[c - 1] = k
        within_rows.append(np.sort(keep))

    k_m = int(math.floor(r_b * N + 1e-9))
    if k_m == 0:
        raise ValueError(f"r_b={r_b} keeps no samples of {N}")
    kept = np.sort(_nearest(X, X.mean(axis=0), k_m))
    mu_lb = X[kept].mean(axis=0)
    S_b = np.zeros((d, d))
    mu_b = np.full((n_classes, d), np.nan)
    n_local = np.zeros(n_classes, dtype=np.int64)
    for c in range(1, n_classes + 1):
        part = kept[y[kept] == c]
        if part.size == 0:
            continue
        mu = X[part].mean(axis=0)
        diff = mu - mu_lb
        S_b += part.size * np.outer(diff, diff)
        mu_b[c - 1] = mu
        n_local[c - 1] = part.size
    S_b = 0.5 * (S_b + S_b.T)
    S_w = 0.5 * (S_w + S_w.T)
    return LocalScatter(S_b, S_w, mu_lb, mu_b, mu_w, k_m, k_mc, n_local,
                        np.concatenate(within_rows) if within_rows else np.zeros(0, np.int64),
                        kept)


@njit
def knn_table(X, k):
    """Indices of the ``k`` nearest other rows of each row; ties by lower index."""
    N, d = X.shape
    out = np.empty((N, k), dtype=np.int64)
    best = np.empty(k)
    for i in range(N):
        best[:] = np.inf
        for j in range(N):
            if j == i:
                continue
            dist = 0.0
            for t in range(d):
                diff = X[j, t] - X[i, t]
                dist += diff * diff
            # strict comparison keeps the earlier (lower) index on ties
            if dist < best[k - 1]:
                pos = k - 1
                while pos > 0 and best[pos - 1] > dist:
                    best[pos] = best[pos - 1]
                    out[i, pos] = out[i, pos - 1]
                    pos -= 1
                best[pos] = dist
                out[i, pos] = j
    return out


def _knn_table_numpy(X, k, block=512):
    """Vectorised twin of :func:`knn_table` for the uncompiled backend."""
    N = X.shape[0]
    out = np.empty((N, k), dtype=np.int64)
    for s in range(0, N, block):
        rows = np.arange(s, min(s + block, N))
        D = ((X[rows, None, :] - X[None, :, :]) ** 2).sum(-1)
        D[np.arange(len(rows)), rows] = np.inf
        out[rows] = np.argsort(D, axis=1, kind="stable")[:, :k]
    return out


def knn_indices(X, k: int) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    return knn_table(X, int(k)) if USE_NUMBA else _knn_table_numpy(X, int(k))


@dataclass
class GraphReg:
    affinity: sp.csr_matrix  # symmetric 0/1, zero diagonal
    degree: np.ndarray
    k_nn: int

    @property
    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(self.degree) - self.affinity).tocsr()

    def quadratic_form(self, X) -> np.ndarray:
        """``X.T @ L @ X`` without densifying L."""
        X = np.asarray(X, dtype=np.float64)
        G = X.T @ (self.degree[:, None] * X) - X.T @ (self.affinity @ X)
        return 0.5 * (G + G.T)


def knn_affinity(X, k_nn: int) -> GraphReg:
    """Symmetric kNN graph: i~j when either is among the other's k nearest."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    N = X.shape[0]
    if not 1 <= k_nn < N:
        raise ValueError(f"k_nn must be in [1, N-1], got {k_nn} for N={N}")
    nbrs = knn_indices(X, k_nn)
    rows = np.repeat(np.arange(N), k_nn)
    A = sp.csr_matrix((np.ones(N * k_nn), (rows, nbrs.ravel())), shape=(N, N))
    A = A.maximum(A.T).tocsr()
    A.data[:] = 1.0
    A.setdiag(0)
    A.eliminate_zeros()
    return GraphReg(A, np.asarray(A.sum(axis=1)).ravel(), int(k_nn))


def _sign_fix(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for j in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, j]) > 1e-12)
        if nz.size and V[nz[0], j] < 0:
            V[:, j] = -V[:, j]
    return V


def solve_projection(S_w, S_b, XLX, gamma: float, k: int, eps: float = 1e-6,
                     return_values: bool = False):
    """Eigenvectors of ``(S_b - gamma XLX + eps I)^-1 S_w`` for the ``k`` smallest eigenvalues.

    "Smallest" follows the constrained minimum: non-negative eigenvalues come
    first in ascending order (they are the stationary points with a positive
    constraint value), followed by the negative ones. Vectors are unit length
    with their first non-zero entry positive.
    """
    S_w = np.asarray(S_w, dtype=np.float64)
    d = S_w.shape[0]
    if k > d:
        raise ValueError(f"k={k} exceeds dimension {d}")
    B = np.asarray(S_b, dtype=np.float64) - gamma * np.asarray(XLX, dtype=np.float64) \
        + eps * np.eye(d)
    Mx = scipy.linalg.solve(B, S_w)
    vals, vecs = np.linalg.eig(Mx)
    scale = max(1.0, np.max(np.abs(vals))) if vals.size else 1.0
    finite = np.isfinite(vals) & np.all(np.isfinite(vecs), axis=0)
    real = np.abs(vals.imag) <= 1e-8 * scale
    ok = np.flatnonzero(finite & real)
    if ok.size < k:
        raise ValueError(f"only {ok.size} finite real eigenpairs, {k} requested")
    lam = vals.real[ok]
    V = vecs.real[:, ok]
    order = np.lexsort((lam, lam < 0))[:k]
    lam = lam[order]
    V = V[:, order]
    V /= np.linalg.norm(V, axis=0, keepdims=True)
    V = _sign_fix(V)
    return (V, lam) if return_values else V


@dataclass(frozen=True)
class WlppdConfig:
    r_b: float = 0.9
    r_w: float = 0.9
    gamma: float = 0.1
    k: int | None = None  # None: keep every direction of the subspace
    k_nn: int = 5
    P: int = 5
    eps: float = 1e-6
    subspace_ratio: float = 0.8
    alpha_search: bool = True
    alpha_step: float = 0.1
    val_fraction: float = 0.2


@dataclass
class Projector:
    W: np.ndarray  # d x k combined projection
    subspace_projectors: list = field(default_factory=list)  # lifted d x k matrices
    subspaces: list = field(default_factory=list)
    alphas: np.ndarray = None
    eigenvalues: list = field(default_factory=list)
    gamma: float = 0.0
    eps: float = 0.0

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    @property
    def k(self) -> int:
        return self.W.shape[1]


def project(projector: Projector, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != projector.n_features:
        raise ValueError(f"expected {projector.n_features} features, got {X.shape[1]}")
    return X @ projector.W


def simplex_grid(P: int, step: float = 0.1):
    """All weight vectors on the simplex with coordinates in multiples of ``step``."""
    m = int(round(1.0 / step))
    out = []
    for cuts in itertools.combinations(range(m + P - 1), P - 1):
        parts = np.diff(np.concatenate([[-1], cuts, [m + P - 1]])) - 1
        out.append(parts / m)
    return np.array(out)


def nearest_centroid_accuracy(Z_fit, y_fit, Z_val, y_val, n_classes) -> float:
    cents = np.full((n_classes, Z_fit.shape[1]), np.inf)
    for c in range(1, n_classes + 1):
        m = y_fit == c
        if m.any():
            cents[c - 1] = Z_fit[m].mean(axis=0)
    d = ((Z_val[:, None, :] - np.where(np.isfinite(cents), cents, 0.0)[None]) ** 2).sum(-1)
    d[:, ~np.all(np.isfinite(cents), axis=1)] = np.inf
    return float(np.mean(np.argmin(d, axis=1) + 1 == y_val))


def _fit_subspace(X, y, cols, cfg: WlppdConfig, k: int, n_classes: int):
    Xs = X[:, cols]
    ls = local_scatter(Xs, y, cfg.r_b, cfg.r_w, n_classes)
    k_nn = min(cfg.k_nn, Xs.shape[0] - 1)
    XLX = knn_affinity(Xs, k_nn).quadratic_form(Xs)
    V, lam = solve_projection(ls.within, ls.between, XLX, cfg.gamma, k, cfg.eps, True)
    lifted = np.zeros((X.shape[1], k))
    lifted[cols] = V
    return lifted, lam


def _draw_subspaces(d: int, cfg: WlppdConfig, rng):
    size = min(d, max(1, math.ceil(cfg.subspace_ratio * d - 1e-9)))
    return [np.sort(rng.choice(d, size=size, replace=False)) for _ in range(cfg.P)], size


def choose_alphas(parts_fit, y_fit, parts_val, y_val, n_classes, step=0.1):
    """Grid point maximising nearest-centroid validation accuracy; first best wins."""
    best_acc, best = -1.0, None
    for a in simplex_grid(len(parts_fit), step):
        Zf = sum(w * Z for w, Z in zip(a, parts_fit))
        Zv = sum(w * Z for w, Z in zip(a, parts_val))
        acc = nearest_centroid_accuracy(Zf, y_fit, Zv, y_val, n_classes)
        if acc > best_acc + 1e-12:
            best_acc, best = acc, a
    return best, best_acc


def fit_wlppd(X, y, cfg: WlppdConfig, seed: int, n_classes: int | None = None) -> Projector:
    """Fit one w-LPPD projector on a (bagged) training subset.

    ``P`` random feature subspaces are solved independently, lifted back to
    the full width with zero rows, and averaged with simplex weights chosen on
    an internal validation split (uniform weights when the search is off).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    n_classes = n_classes or int(y.max())
    if len(np.unique(y)) < 2:
        raise ValueError("w-LPPD needs at least two classes")
    rng = np.random.default_rng(seed)
    d = X.shape[1]
    subspaces, size = _draw_subspaces(d, cfg, rng)
    k = cfg.k if cfg.k is not None else size
    k = min(k, size)

    if cfg.alpha_search and cfg.P > 1:
        from .svm import stratified_folds

        fold_of = stratified_folds(y, max(2, int(round(1.0 / cfg.val_fraction))), rng)
        val = fold_of == 0
        fit = ~val
        parts_fit, parts_val = [], []
        for cols in subspaces:
            W_i, _ = _fit_subspace(X[fit], y[fit], cols, cfg, k, n_classes)
            parts_fit.append(X[fit] @ W_i)
            parts_val.append(X[val] @ W_i)
        alphas, _ = choose_alphas(parts_fit, y[fit], parts_val, y[val], n_classes,
                                  cfg.alpha_step)
    else:
        alphas = np.full(cfg.P, 1.0 / cfg.P)

    lifted, eigs = [], []
    for cols in subspaces:
        W_i, lam = _fit_subspace(X, y, cols, cfg, k, n_classes)
        lifted.append(W_i)
        eigs.append(lam)
    W = sum(a * W_i for a, W_i in zip(alphas, lifted))
    return Projector(W, lifted, subspaces, np.asarray(alphas, dtype=np.float64), eigs,
                     cfg.gamma, cfg.eps)
