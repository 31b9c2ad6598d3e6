"""L1-regularised least squares by proximal gradient, used to prune hybrid features."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

SUPPORT_TOL = 1e-10


@dataclass(frozen=True)
class LassoConfig:
    kappa: float = 0.0
    max_iters: int = 5000
    tol: float = 1e-8

    def __post_init__(self):
        if self.kappa < 0 or self.tol <= 0:
            raise ValueError("need kappa >= 0 and tol > 0")


@dataclass
class LassoState:
    w: np.ndarray
    M: float
    objective: list
    iterations: int = 0


@dataclass(frozen=True)
class SelectionMask:
    """Kept column indices (sorted, 0-based) out of ``n_columns``."""

    indices: np.ndarray
    n_columns: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_columns:
            raise ValueError(f"expected {self.n_columns} columns, got {X.shape[1]}")
        return X[:, self.indices]


LIPSCHITZ_PAD = 1e-6


def power_iteration(A: np.ndarray, tol: float = 1e-10, max_iters: int = 20000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix.

    Stops on the residual ``|Av - lam v| <= tol * lam``, which bounds the
    distance to an eigenvalue. Watching only the change in ``lam`` stops far
    too early when the top two eigenvalues are close.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if n == 0:
        return 0.0
    # deterministic start with every coordinate populated
    v = 1.0 + np.arange(n) / n
    v /= np.linalg.norm(v)
    for _ in range(max_iters):
        w = A @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * max(abs(lam), 1e-300):
            return lam
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    warnings.warn(f"power iteration did not converge in {max_iters} steps", stacklevel=2)
    return float(v @ (A @ v))


def soft_threshold(u, tau):
    """Proximal map of ``tau * |.|``; works on scalars and arrays."""
    if np.any(np.asarray(tau) < 0):
        raise ValueError("tau must be non-negative")
    out = np.sign(u) * np.maximum(np.abs(u) - tau, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def lasso_objective(X, y, w, kappa) -> float:
    r = y - X @ w
    return float(r @ r + kappa * np.abs(w).sum())


def standardize_columns(X: np.ndarray):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    Z = (X - mu) / safe
    Z[:, sd <= 0] = 0.0
    return Z, mu, sd


def lasso_pgd_raw(X: np.ndarray, y: np.ndarray, cfg: LassoConfig, w0=None) -> LassoState:
    """Minimise ``||y - Xw||^2 + kappa ||w||_1`` as given, no centring or scaling."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    XtX = X.T @ X
    Xty = X.T @ y
    # the Rayleigh quotient approaches lambda_max from below; pad it so M stays an upper bound
    M = 2.0 * power_iteration(XtX) * (1.0 + LIPSCHITZ_PAD)
    if M <= 0:
        return LassoState(np.zeros(X.shape[1]), 1.0, [lasso_objective(X, y, np.zeros(X.shape[1]), cfg.kappa)])
    w = np.zeros(X.shape[1]) if w0 is None else np.array(w0, dtype=np.float64)
    objective = [lasso_objective(X, y, w, cfg.kappa)]
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = 2.0 * (XtX @ w - Xty)
        w_new = soft_threshold(w - grad / M, cfg.kappa / M)
        objective.append(lasso_objective(X, y, w_new, cfg.kappa))
        if not math.isfinite(objective[-1]):
            raise FloatingPointError("non-finite lasso objective; step constant too small")
        step = np.max(np.abs(w_new - w)) if w.size else 0.0
        w = w_new
        if step <= cfg.tol:
            break
    return LassoState(w, M, objective, it)


def lasso_pgd(X: np.ndarray, y: np.ndarray, cfg: LassoConfig, return_state: bool = False):
    """Lasso on standardised columns and centred targets.

    The returned coefficients are in the standardised coordinates (their
    support is what selection uses). Constant columns get a zero coefficient.
    """
    Z, _mu, _sd = standardize_columns(np.asarray(X, dtype=np.float64))
    yc = np.asarray(y, dtype=np.float64) - np.mean(y)
    state = lasso_pgd_raw(Z, yc, cfg)
    return state if return_state else state.w


def kappa_max(X: np.ndarray, Y: np.ndarray) -> float:
    """Smallest kappa giving an all-zero solution, over the columns of ``Y``."""
    Z, _, _ = standardize_columns(np.asarray(X, dtype=np.float64))
    Yc = Y - Y.mean(axis=0)
    return float(2.0 * np.max(np.abs(Z.T @ Yc))) if Z.size else 0.0


def select_support(w, X=None, tol: float = SUPPORT_TOL):
    """Columns with a non-negligible coefficient.

    ``w`` may be a vector or a (classes x columns) matrix, in which case the
    union of the per-row supports is kept. If nothing survives, the
    ceil(p / 4) columns of largest |w| are kept instead (with a warning).
    """
    W = np.atleast_2d(np.asarray(w, dtype=np.float64))
    p = W.shape[1]
    strength = np.abs(W).max(axis=0)
    keep = np.flatnonzero(strength > tol)
    if keep.size == 0:
        n_keep = max(1, math.ceil(p / 4))
        warnings.warn(f"empty lasso support; keeping the {n_keep} largest-|w| columns", stacklevel=2)
        keep = np.sort(np.argsort(-strength, kind="stable")[:n_keep])
    mask = SelectionMask(keep, p)
    if X is None:
        return mask
    return mask, mask.apply(X)


def one_vs_rest_targets(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels[:, None] == np.arange(1, n_classes + 1)[None, :]).astype(np.float64)


def lasso_one_vs_rest(X, labels, n_classes: int, cfg: LassoConfig) -> np.ndarray:
    """Coefficient matrix, one row per class (0/1 targets)."""
    Y = one_vs_rest_targets(labels, n_classes)
    return np.vstack([lasso_pgd(X, Y[:, c], cfg) for c in range(n_classes)])


# kappa candidates as multiples of kappa_max / 100
DEFAULT_KAPPA_FACTORS = (0.001, 0.01, 0.1, 1.0, 10.0)


def choose_kappa(X, labels, n_classes: int, score_fn, cfg: LassoConfig = LassoConfig(),
                 factors=DEFAULT_KAPPA_FACTORS):
    """Try ``factor * kappa_max / 100`` for each factor and keep the best-scoring support.

    ``score_fn(mask)`` returns a validation accuracy for a column selection.
    Ties go to the larger kappa (the sparser model). Returns
    ``(kappa, table)`` where ``table`` lists ``(kappa, n_selected, score)``.
    """
    kmax = kappa_max(X, one_vs_rest_targets(labels, n_classes))
    table = []
    best = None
    for f in sorted(factors, reverse=True):
        kappa = f * kmax / 100.0
        W = lasso_one_vs_rest(X, labels, n_classes, replace(cfg, kappa=kappa))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mask = select_support(W)
        score = float(score_fn(mask))
        table.append((kappa, len(mask.indices), score))
        if best is None or score > best[1]:
            best = (kappa, score)
    table.sort()
    return best[0], table
