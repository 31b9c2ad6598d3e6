"""Soft-margin SVM trained by SMO, one-vs-one multiclass and a small CV grid search."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _smo

log = logging.getLogger(__name__)

CACHE_BYTES = 256 * 2 ** 20
DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_EXPONENTS = tuple(range(-4, 5))


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf gamma must be positive")

    @property
    def code(self) -> int:
        return _smo.LINEAR if self.kind == "linear" else _smo.RBF


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: KernelSpec) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    dots = A @ B.T
    if kernel.kind == "linear":
        return dots
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * dots
    return np.exp(-kernel.gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySvm:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for the support vectors
    bias: float
    C: float
    kernel: KernelSpec
    support: np.ndarray = None  # row indices into the X this model was fitted on
    iterations: int = 0
    converged: bool = True

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if len(self.dual_coef) == 0:
            return np.full(X.shape[0], self.bias)
        return kernel_matrix(X, self.support_vectors, self.kernel) @ self.dual_coef + self.bias


def train_binary(X, y, C: float = 1.0, kernel: KernelSpec | None = None, eps: float = 1e-3,
                 max_iter: int | None = None) -> BinarySvm:
    """SMO fit on labels in {-1, +1}."""
    kernel = kernel or KernelSpec("rbf", 1.0 / max(1, np.shape(X)[1]))
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not C > 0:
        raise ValueError("C must be positive")
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("binary SVM needs both labels -1 and +1")
    n = X.shape[0]
    if max_iter is None:
        max_iter = max(100_000, 10 * n * n)
    slots = int(max(2, CACHE_BYTES // (8 * n)))
    alpha, rho, it, converged = _smo.smo_solve(X, y, float(C), kernel.code, float(kernel.gamma),
                                               float(eps), int(max_iter), slots)
    if not converged:
        log.warning("SMO stopped at the iteration cap (%d) before reaching eps=%g", it, eps)
    sv = np.flatnonzero(alpha > 0)
    return BinarySvm(X[sv].copy(), alpha[sv] * y[sv], -float(rho), float(C), kernel, sv,
                     int(it), bool(converged))


def predict_binary(model: BinarySvm, x):
    """Labels in {-1, +1} (exact zero goes to +1) and decision values."""
    dec = model.decision_function(x)
    return np.where(dec >= 0, 1, -1), dec


def kkt_violations(model: BinarySvm, X, y, tol: float = 1e-3) -> np.ndarray:
    """Indices of training rows breaking the KKT conditions by more than ``tol``."""
    y = np.asarray(y, dtype=np.float64)
    alpha = np.zeros(len(y))
    if model.support is not None and len(model.support):
        alpha[model.support] = model.dual_coef * y[model.support]
    margin = y * model.decision_function(X)
    C = model.C
    bad = np.zeros(len(y), dtype=bool)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    bad |= at_zero & (margin < 1 - tol)
    bad |= free & (np.abs(margin - 1) > tol)
    bad |= at_c & (margin > 1 + tol)
    bad |= (alpha < -1e-12) | (alpha > C + 1e-12)
    return np.flatnonzero(bad)


def dual_equality_residual(model: BinarySvm) -> float:
    return float(abs(np.sum(model.dual_coef)))


@dataclass
class MulticlassSvm:
    n_classes: int
    pairs: list
    models: list
    C: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)

    @property
    def n_features(self) -> int:
        return self.models[0].n_features


def train_multiclass(X, y, C: float = 1.0, kernel: KernelSpec | None = None,
                     n_classes: int | None = None, eps: float = 1e-3) -> MulticlassSvm:
    """One-vs-one: class ``a`` is +1 and ``b`` is -1 in pair ``(a, b)``, a < b."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y)
    kernel = kernel or KernelSpec("rbf", 1.0 / max(1, X.shape[1]))
    n_classes = n_classes or int(y.max())
    present = [c for c in range(1, n_classes + 1) if np.any(y == c)]
    if len(present) < 2:
        raise ValueError("need at least two classes")
    pairs, models = [], []
    for a, b in itertools.combinations(range(1, n_classes + 1), 2):
        rows = np.flatnonzero((y == a) | (y == b))
        ya = np.where(y[rows] == a, 1.0, -1.0)
        if np.all(ya > 0) or np.all(ya < 0):
            # a class missing from this training set: constant voter for the other one
            bias = 1.0 if rows.size and ya[0] > 0 else -1.0
            models.append(BinarySvm(np.zeros((0, X.shape[1])), np.zeros(0), bias, C, kernel,
                                    np.zeros(0, dtype=np.int64)))
        else:
            models.append(train_binary(X[rows], ya, C, kernel, eps=eps))
        pairs.append((a, b))
    return MulticlassSvm(n_classes, pairs, models, C, kernel)


def multiclass_scores(model: MulticlassSvm, X):
    """Vote counts and summed |decision| of the won duels, both (N x C)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    N = X.shape[0]
    votes = np.zeros((N, model.n_classes))
    strength = np.zeros((N, model.n_classes))
    rows = np.arange(N)
    for (a, b), m in zip(model.pairs, model.models):
        dec = m.decision_function(X)
        winner = np.where(dec >= 0, a, b) - 1
        votes[rows, winner] += 1
        strength[rows, winner] += np.abs(dec)
    return votes, strength


def pair_training_set(model: MulticlassSvm, k: int, X, y):
    """Rows and +/-1 labels the ``k``-th pairwise model was trained on."""
    a, b = model.pairs[k]
    y = np.asarray(y)
    rows = np.flatnonzero((y == a) | (y == b))
    return np.asarray(X)[rows], np.where(y[rows] == a, 1.0, -1.0)


def audit_multiclass(model: MulticlassSvm, X, y, tol: float = 1e-3) -> int:
    """Total KKT violations over all pairwise models, given the original training data."""
    bad = 0
    for k, m in enumerate(model.models):
        if len(m.dual_coef) == 0:
            continue
        Xp, yp = pair_training_set(model, k, X, y)
        bad += len(kkt_violations(m, Xp, yp, tol))
    return bad


def predict_multiclass(model: MulticlassSvm, X) -> np.ndarray:
    """Majority vote; ties by larger summed |decision|, then the lower class."""
    votes, strength = multiclass_scores(model, X)
    top = votes == votes.max(axis=1, keepdims=True)
    s = np.where(top, strength, -np.inf)
    top &= s == s.max(axis=1, keepdims=True)
    return np.argmax(top, axis=1) + 1


def default_gamma_grid(n_features: int):
    return tuple((2.0 ** e) / max(1, n_features) for e in DEFAULT_GAMMA_EXPONENTS)


@dataclass(frozen=True)
class SvmGrid:
    C_values: tuple = DEFAULT_C_GRID
    gamma_exponents: tuple = DEFAULT_GAMMA_EXPONENTS
    folds: int = 5
    max_cv_samples: int = 1500
    kernel: str = "rbf"
    # a fixed (C, gamma * d) pair bypasses the search when set
    fixed: tuple | None = None


def stratified_folds(labels, k: int, rng: np.random.Generator):
    labels = np.asarray(labels)
    fold_of = np.empty(len(labels), dtype=np.int64)
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        fold_of[members] = np.arange(len(members)) % k
    return fold_of


def _stratified_cap(labels, cap: int, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels)
    if len(labels) <= cap:
        return np.arange(len(labels))
    keep = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n_c = max(1, int(round(cap * len(members) / len(labels))))
        keep.append(rng.choice(members, size=min(n_c, len(members)), replace=False))
    return np.sort(np.concatenate(keep))


def grid_search(X, y, n_classes: int, grid: SvmGrid, seed: int):
    """Pick (C, kernel) by stratified k-fold CV accuracy; returns ``(C, kernel, table)``.

    CV runs on a class-stratified subsample of at most ``grid.max_cv_samples``
    rows. Ties keep the first grid point in (C, gamma) order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    d = X.shape[1]
    if grid.fixed is not None:
        C, g = grid.fixed
        return float(C), KernelSpec(grid.kernel, float(g) / max(1, d)), []
    rng = np.random.default_rng(seed)
    rows = _stratified_cap(y, grid.max_cv_samples, rng)
    Xs, ys = X[rows], y[rows]
    fold_of = stratified_folds(ys, grid.folds, rng)
    gammas = [(2.0 ** e) / max(1, d) for e in grid.gamma_exponents] if grid.kernel == "rbf" else [1.0]
    table = []
    best = None
    for C in grid.C_values:
        for g in gammas:
            kernel = KernelSpec(grid.kernel, g)
            correct = 0
            for f in range(grid.folds):
                tr = fold_of != f
                te = ~tr
                if not te.any() or len(np.unique(ys[tr])) < 2:
                    continue
                m = train_multiclass(Xs[tr], ys[tr], C, kernel, n_classes)
                correct += int(np.sum(predict_multiclass(m, Xs[te]) == ys[te]))
            acc = correct / len(ys)
            table.append((C, g, acc))
            if best is None or acc > best[0]:
                best = (acc, C, kernel)
    return float(best[1]), best[2], table


def fit_svm(X, y, n_classes: int, grid: SvmGrid, seed: int) -> MulticlassSvm:
    C, kernel, _ = grid_search(X, y, n_classes, grid, seed)
    return train_multiclass(X, y, C, kernel, n_classes)
