"""Bagged w-LPPD + SVM ensemble with accuracy-weighted voting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import svm as svm_mod
from .dataset import BagSample, Dataset, NormStats, bagging_sample
from .wlppd import Projector, WlppdConfig, fit_wlppd, project


@dataclass
class EnsembleUnit:
    bag: BagSample
    projector: Projector
    svm: svm_mod.MulticlassSvm
    weight: float
    class_weights: np.ndarray  # per-class variant, length C
    # min-max of the projected bag rows; unit-norm eigenvectors leave the
    # low-scatter directions tiny, and an RBF kernel would all but ignore them
    scale: NormStats | None = None

    def features(self, X) -> np.ndarray:
        Z = project(self.projector, np.asarray(X)[:, self.bag.feature_indices])
        return Z if self.scale is None else self.scale.apply(Z)

    def predict(self, X) -> np.ndarray:
        return svm_mod.predict_multiclass(self.svm, self.features(X))


@dataclass
class EnsembleModel:
    units: list
    n_classes: int
    n_features: int
    per_class_weights: bool = False

    @property
    def weights(self) -> np.ndarray:
        return np.array([u.weight for u in self.units])


def classifier_weight(predictions, truth) -> float:
    """Fraction of correct predictions."""
    p = np.asarray(predictions)
    t = np.asarray(truth)
    if p.size == 0 or p.shape != t.shape:
        raise ValueError("need equal-length, non-empty inputs")
    return float(np.mean(p == t))


def class_precision(predictions, truth, n_classes: int) -> np.ndarray:
    """Per class c: share of the samples predicted as c that are c (0 if never predicted)."""
    p = np.asarray(predictions)
    t = np.asarray(truth)
    out = np.zeros(n_classes)
    for c in range(1, n_classes + 1):
        hit = p == c
        if hit.any():
            out[c - 1] = np.mean(t[hit] == c)
    return out


def vote_scores(weights, predictions, n_classes: int) -> np.ndarray:
    """Per-class scores ``sum_k w_k [pred_k == c]``.

    ``weights`` is (K,) or (K, C) for class-dependent weights; ``predictions``
    is (K,) or (K, N). Returns (C,) or (N, C).
    """
    P = np.asarray(predictions, dtype=np.int64)
    single = P.ndim == 1
    P = P.reshape(P.shape[0], -1)
    W = np.asarray(weights, dtype=np.float64)
    K, N = P.shape
    if W.shape[0] != K:
        raise ValueError("one weight (row) per unit required")
    scores = np.zeros((N, n_classes))
    cols = np.arange(N)
    for k in range(K):
        w = W[k, P[k] - 1] if W.ndim == 2 else W[k]
        np.add.at(scores, (cols, P[k] - 1), w)
    return scores[0] if single else scores


TIE_RTOL = 1e-9


def vote_labels(scores) -> np.ndarray:
    """argmax with ties to the lowest class.

    Scores within ``TIE_RTOL`` of the maximum count as tied, so sums such as
    0.1 + 0.2 against 0.3 do not depend on rounding or on the weight scale.
    """
    S = np.asarray(scores, dtype=np.float64)
    top = S.max(axis=-1, keepdims=True)
    return np.argmax(S >= top - TIE_RTOL * np.abs(top), axis=-1) + 1


def unit_predictions(model: EnsembleModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {X.shape[1]}")
    return np.vstack([u.predict(X) for u in model.units])


def vote(model: EnsembleModel, X):
    """Returns (scores N x C, labels)."""
    P = unit_predictions(model, X)
    W = (np.vstack([u.class_weights for u in model.units]) if model.per_class_weights
         else model.weights)
    scores = vote_scores(W, P, model.n_classes)
    return scores, vote_labels(scores)


def predict(model: EnsembleModel, X) -> np.ndarray:
    return vote(model, X)[1]


def fit_unit(train: Dataset, delta_rows: float, delta_features: float, wcfg: WlppdConfig,
             grid: svm_mod.SvmGrid, seed: int) -> EnsembleUnit:
    bag = bagging_sample(train, delta_rows, delta_features, seed)
    Xb = train.features[np.ix_(bag.sample_indices, bag.feature_indices)]
    yb = train.labels[bag.sample_indices]
    proj = fit_wlppd(Xb, yb, wcfg, seed, train.n_classes)
    Z = project(proj, Xb)
    scale = NormStats(Z.min(axis=0), Z.max(axis=0))
    clf = svm_mod.fit_svm(scale.apply(Z), yb, train.n_classes, grid, seed)
    unit = EnsembleUnit(bag, proj, clf, 0.0, np.zeros(train.n_classes), scale)
    pred = unit.predict(train.features)
    unit.weight = classifier_weight(pred, train.labels)
    unit.class_weights = class_precision(pred, train.labels, train.n_classes)
    return unit


def fit_ensemble(train: Dataset, K: int = 5, delta_rows: float = 0.7, delta_features: float = 0.5,
                 wlppd_cfg: WlppdConfig | None = None, svm_grid: svm_mod.SvmGrid | None = None,
                 seed: int = 0, per_class_weights: bool = False) -> EnsembleModel:
    """Train ``K`` units on stratified row/feature draws; unit ``k`` uses seed ``seed + k``.

    Weights are training-set accuracies over the full training set.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    wlppd_cfg = wlppd_cfg or WlppdConfig()
    svm_grid = svm_grid or svm_mod.SvmGrid()
    units = [fit_unit(train, delta_rows, delta_features, wlppd_cfg, svm_grid, seed + k)
             for k in range(K)]
    return EnsembleModel(units, train.n_classes, train.n_features, per_class_weights)
