"""Comparison methods: PCA, LPP, plain stacked (sparse) autoencoders, lasso-only selection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import neural as nn
from . import svm as svm_mod
from .model import HessaeModel, train_hessae
from .wlppd import _sign_fix, knn_affinity


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # d x k, orthonormal columns
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[1]


def pca_fit(X, k: int) -> PcaModel:
    """Top-``k`` eigenvectors of the sample covariance, largest variance first."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(1, X.shape[0] - 1)
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(-vals, kind="stable")[:k]
    vals = np.maximum(vals[order], 0.0)
    rank = int(np.sum(vals > 1e-12 * max(1.0, vals[0] if vals.size else 1.0)))
    if rank < k:
        warnings.warn(f"k={k} exceeds the data rank {rank}; trailing components carry no variance",
                      stacklevel=2)
    return PcaModel(mean, _sign_fix(vecs[:, order]), vals)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.mean.shape[0]:
        raise ValueError("dimension mismatch")
    return (X - model.mean) @ model.components


@dataclass(frozen=True)
class LppModel:
    projection: np.ndarray  # d x k, unit-norm columns
    eigenvalues: np.ndarray
    k_nn: int
    eps: float


def lpp_fit(X, k: int, k_nn: int = 5, eps: float = 1e-6) -> LppModel:
    """Locality preserving projection: smallest generalised eigenpairs of
    ``X'LX w = lambda (X'DX + eps I) w``."""
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    if not 1 <= k <= d:
        raise ValueError(f"k must be in [1, {d}]")
    graph = knn_affinity(X, min(k_nn, X.shape[0] - 1))
    XLX = graph.quadratic_form(X)
    XDX = X.T @ (graph.degree[:, None] * X)
    XDX = 0.5 * (XDX + XDX.T) + eps * np.eye(d)
    vals, vecs = scipy.linalg.eigh(XLX, XDX)
    vecs = vecs[:, :k] / np.linalg.norm(vecs[:, :k], axis=0, keepdims=True)
    return LppModel(_sign_fix(vecs), vals[:k], graph.k_nn, eps)


def lpp_transform(model: LppModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.projection.shape[0]:
        raise ValueError("dimension mismatch")
    return X @ model.projection


def k_grid(d: int, fractions=(0.25, 0.5, 0.75)) -> list:
    return sorted({max(1, int(round(f * d))) for f in fractions})


def fit_projection_svm(kind: str, X, y, n_classes: int, grid: svm_mod.SvmGrid, seed: int,
                       fractions=(0.25, 0.5, 0.75), k_nn: int = 5):
    """Choose k for PCA or LPP by the best cross-validated SVM accuracy, then refit.

    Returns ``(transform_model, svm, chosen_k)``.
    """
    X = np.asarray(X, dtype=np.float64)
    fit = {"pca": lambda k: pca_fit(X, k), "lpp": lambda k: lpp_fit(X, k, k_nn)}[kind]
    transform = pca_transform if kind == "pca" else lpp_transform
    best = None
    for k in k_grid(X.shape[1], fractions):
        model = fit(k)
        Z = transform(model, X)
        C, kernel, table = svm_mod.grid_search(Z, y, n_classes, grid, seed)
        score = max((row[2] for row in table), default=0.0)
        if best is None or score > best[0]:
            best = (score, k, model, Z, C, kernel)
    _, k, model, Z, C, kernel = best
    return model, svm_mod.train_multiclass(Z, y, C, kernel, n_classes), k


def train_sae_ssae(train, arch, sparsity: nn.SparsityConfig, pre_cfg: nn.TrainConfig,
                   fine_cfg: nn.TrainConfig, seed: int, sparse: bool = True) -> HessaeModel:
    """Plain stacked autoencoder plus softmax; ``sparse=False`` drops the KL term (beta=0)."""
    if not sparse:
        sparsity = nn.SparsityConfig(sparsity.rho, 0.0, sparsity.lam)
    return train_hessae(train, arch, sparsity, pre_cfg, fine_cfg, seed, embed=False)


def hesae_sparsity(sparsity: nn.SparsityConfig) -> nn.SparsityConfig:
    """The non-sparse HESSAE variant keeps everything but the KL weight."""
    return nn.SparsityConfig(sparsity.rho, 0.0, sparsity.lam)

