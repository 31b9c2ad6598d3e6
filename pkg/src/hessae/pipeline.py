"""Stage pipelines (OF, DF, HF, HF&L1, full and the baselines) and the repeat protocol."""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import ensemble as ens
from . import lasso as l1
from . import model as hm
from . import svm as svm_mod
from .config import ABLATION_STAGES, AUTOENCODER_STAGES, ExperimentConfig
from .dataset import (Dataset, NormStats, load_table, make_ad_surrogate, normalize_minmax,
                      stratified_holdout_split)
from .report import Report, StageResult

log = logging.getLogger(__name__)

SOFTMAX_STAGES = AUTOENCODER_STAGES
# stages whose features start from the hybrid (original + deep) matrix
HYBRID_STAGES = ("HF", "HF&L1", "full")


@dataclass
class FittedPipeline:
    """Everything needed to classify raw feature rows for one stage."""

    stage: str
    norm: NormStats
    n_features: int
    n_classes: int
    deep: hm.HessaeModel | None = None  # feature extractor or softmax classifier
    mask: l1.SelectionMask | None = None
    transform: object = None  # PcaModel / LppModel
    classifier: object = None  # MulticlassSvm / EnsembleModel
    details: dict = field(default_factory=dict)


def resolve_dataset_path(path) -> Path:
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    # presets name files relative to the project root
    root = Path(__file__).resolve().parents[2] / p
    return root if root.exists() else p


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset.startswith("surrogate:"):
        return make_ad_surrogate(seed=cfg.seed)
    return load_table(resolve_dataset_path(cfg.dataset), cfg.label_col)


def stage_features(pipe: FittedPipeline, Xn: np.ndarray) -> np.ndarray:
    """Feature matrix a stage's classifier sees, from min-max scaled inputs."""
    s = pipe.stage
    if s in ("OF",):
        return Xn
    if s == "DF":
        return hm.extract_deep_features(pipe.deep, Xn)
    if s in HYBRID_STAGES:
        H = hm.hybrid_features(Xn, hm.extract_deep_features(pipe.deep, Xn))
        return H if pipe.mask is None else pipe.mask.apply(H)
    if s == "lasso":
        return pipe.mask.apply(Xn)
    if s == "pca":
        return bl.pca_transform(pipe.transform, Xn)
    if s == "lpp":
        return bl.lpp_transform(pipe.transform, Xn)
    raise ValueError(f"stage {s!r} has no feature map")


def predict(pipe: FittedPipeline, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != pipe.n_features:
        raise ValueError(f"expected {pipe.n_features} features, got {X.shape[1]}")
    Xn = pipe.norm.apply(X)
    if pipe.stage in SOFTMAX_STAGES:
        return hm.predict(pipe.deep, Xn)
    F = stage_features(pipe, Xn)
    if pipe.stage == "full":
        return ens.predict(pipe.classifier, F)
    return svm_mod.predict_multiclass(pipe.classifier, F)


def split_digest(rows: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(rows, dtype=np.int64).tobytes()).hexdigest()[:16]


class RepeatContext:
    """Fits shared by several stages within one repeat (same split)."""

    def __init__(self, cfg: ExperimentConfig, train: Dataset, norm: NormStats, repeat: int):
        self.cfg = cfg
        self.train = train
        self.norm = norm
        self.repeat = repeat
        self._cache = {}

    def seed(self, what: str) -> int:
        return self.cfg.seed_for(self.repeat, what)

    def _memo(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def autoencoder(self, kind: str) -> hm.HessaeModel:
        h = self.cfg.hessae

        def fit():
            sp = h.sparsity()
            if kind == "hessae":
                return hm.train_hessae(self.train, h.arch, sp, h.pretrain_cfg(), h.finetune_cfg(),
                                       self.seed("hessae"))
            if kind == "hesae":
                return hm.train_hessae(self.train, h.arch, bl.hesae_sparsity(sp), h.pretrain_cfg(),
                                       h.finetune_cfg(), self.seed("hesae"))
            return bl.train_sae_ssae(self.train, h.arch, sp, h.pretrain_cfg(), h.finetune_cfg(),
                                     self.seed(kind), sparse=(kind == "ssae"))

        return self._memo(("ae", kind), fit)

    def hybrid(self) -> np.ndarray:
        return self._memo("hybrid", lambda: hm.hybrid_features(
            self.train.features, hm.extract_deep_features(self.autoencoder("hessae"), self.train)))

    def l1_selection(self, X: np.ndarray, key: str):
        return self._memo(("l1", key), lambda: select_columns(X, self.train.labels,
                                                              self.train.n_classes, self.cfg,
                                                              self.seed("lasso")))


def _svm_with(grid: svm_mod.SvmGrid, X, y, n_classes, seed):
    C, kernel, table = svm_mod.grid_search(X, y, n_classes, grid, seed)
    model = svm_mod.train_multiclass(X, y, C, kernel, n_classes)
    return model, {"C": C, "gamma": kernel.gamma, "kernel": kernel.kind}


def select_columns(X, labels, n_classes, cfg: ExperimentConfig, seed: int):
    """Lasso column selection with kappa chosen on an internal validation split.

    The SVM used for scoring has its (C, gamma * d) fixed by one grid search on
    the fit part, so each kappa costs a single SVM fit.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    ls = cfg.lasso
    rng = np.random.default_rng(seed)
    fold_of = svm_mod.stratified_folds(labels, max(2, int(round(1.0 / ls.val_fraction))), rng)
    val = fold_of == 0
    fit = ~val
    C, kernel, _ = svm_mod.grid_search(X[fit], labels[fit], n_classes, cfg.svm, seed)
    gamma_d = kernel.gamma * X.shape[1]

    def score(mask: l1.SelectionMask) -> float:
        cols = mask.indices
        k = svm_mod.KernelSpec(kernel.kind, gamma_d / len(cols)) if kernel.kind == "rbf" else kernel
        m = svm_mod.train_multiclass(X[fit][:, cols], labels[fit], C, k, n_classes)
        return float(np.mean(svm_mod.predict_multiclass(m, X[val][:, cols]) == labels[val]))

    kappa, table = l1.choose_kappa(X[fit], labels[fit], n_classes, score, ls.lasso_cfg(),
                                   ls.kappa_factors)
    W = l1.lasso_one_vs_rest(X, labels, n_classes, replace(ls.lasso_cfg(), kappa=kappa))
    mask = l1.select_support(W)
    return mask, {"kappa": kappa, "n_selected": int(len(mask.indices)),
                  "kappa_table": [list(r) for r in table]}


def fit_stage(ctx: RepeatContext, stage: str) -> FittedPipeline:
    cfg = ctx.cfg
    tr = ctx.train
    y, C = tr.labels, tr.n_classes
    pipe = FittedPipeline(stage, ctx.norm, tr.n_features, C)
    if stage in SOFTMAX_STAGES:
        pipe.deep = ctx.autoencoder(stage)
        return pipe
    if stage in ("DF",) + HYBRID_STAGES:
        pipe.deep = ctx.autoencoder("hessae")
    if stage in ("HF&L1", "full"):
        pipe.mask, info = ctx.l1_selection(ctx.hybrid(), "hybrid")
        pipe.details.update(info)
    elif stage == "lasso":
        pipe.mask, info = ctx.l1_selection(tr.features, "original")
        pipe.details.update(info)
    elif stage in ("pca", "lpp"):
        b = cfg.baselines
        pipe.transform, pipe.classifier, k = bl.fit_projection_svm(
            stage, tr.features, y, C, cfg.svm, ctx.seed("baseline"), b.k_fractions, b.lpp_k_nn)
        pipe.details.update({"k": k, "C": pipe.classifier.C, "gamma": pipe.classifier.kernel.gamma})
        return pipe
    F = stage_features(pipe, tr.features)
    if stage == "full":
        e = cfg.ensemble
        train_f = tr.with_features(F)
        pipe.classifier = ens.fit_ensemble(train_f, e.K, e.delta_rows, e.delta_features, cfg.wlppd,
                                           cfg.svm, ctx.seed("ensemble"), e.per_class_weights)
        pipe.details["unit_weights"] = pipe.classifier.weights.tolist()
        return pipe
    pipe.classifier, info = _svm_with(cfg.svm, F, y, C, ctx.seed("svm"))
    pipe.details.update(info)
    return pipe


def prepare_split(data: Dataset, cfg: ExperimentConfig, repeat: int):
    """Split with seed ``master + repeat`` and scale with training statistics."""
    train, test = stratified_holdout_split(data, cfg.test_fraction, cfg.seed_for(repeat, "split"))
    train_n, _, norm = normalize_minmax(train)
    return train, test, train_n, norm


def run_experiment(cfg: ExperimentConfig, data: Dataset | None = None, keep_models: bool = False,
                   progress=None) -> Report:
    """Run every configured stage on ``cfg.repeats`` shared hold-out splits.

    A stage that raises in some repeat is recorded as failed for that repeat;
    the others continue. With ``keep_models`` the fitted pipelines are kept on
    ``report.models[(repeat, stage)]``.
    """
    cfg.validate()
    data = data if data is not None else load_dataset(cfg)
    results = {s: StageResult(s) for s in cfg.stages}
    report = Report(cfg.to_dict(), [results[s] for s in cfg.stages])
    report.metadata.update({
        "n_samples": data.n_samples, "n_features": data.n_features, "n_classes": data.n_classes,
        "std": "population (divide by R)",
        "weights": "ensemble unit weights are training-set accuracies (optimistic)",
    })
    for r in range(cfg.repeats):
        train, test, train_n, norm = prepare_split(data, cfg, r)
        digest = split_digest(train.row_ids) + ":" + split_digest(test.row_ids)
        report.splits.append({"repeat": r, "n_train": train.n_samples, "n_test": test.n_samples,
                              "digest": digest})
        ctx = RepeatContext(cfg, train_n, norm, r)
        for stage in cfg.stages:
            t0 = time.perf_counter()
            try:
                pipe = fit_stage(ctx, stage)
                acc = float(np.mean(predict(pipe, test.features) == test.labels))
                err = None
            except Exception as exc:  # recorded per repeat, the run goes on
                log.exception("stage %s failed in repeat %d", stage, r)
                pipe, acc, err = None, None, f"{type(exc).__name__}: {exc}"
            dt = time.perf_counter() - t0
            results[stage].add(acc, err, dt, digest, pipe.details if pipe else {})
            if keep_models and pipe is not None:
                report.models[(r, stage)] = pipe
            if progress:
                progress(r, stage, acc, dt)
    return report


def run_ablation(cfg: ExperimentConfig, data: Dataset | None = None, **kw) -> Report:
    return run_experiment(replace(cfg, stages=ABLATION_STAGES), data, **kw)


def run_comparison(cfg: ExperimentConfig, data: Dataset | None = None, **kw) -> Report:
    return run_experiment(replace(cfg, stages=AUTOENCODER_STAGES), data, **kw)


def train_pipeline(cfg: ExperimentConfig, stage: str, data: Dataset | None = None, repeat: int = 0):
    """Fit one stage on the split of ``repeat``; returns ``(pipeline, test Dataset)``."""
    cfg = replace(cfg, stages=(stage,)).validate()
    data = data if data is not None else load_dataset(cfg)
    _, test, train_n, norm = prepare_split(data, cfg, repeat)
    return fit_stage(RepeatContext(cfg, train_n, norm, repeat), stage), test
