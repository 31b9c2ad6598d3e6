"""Experiment configuration: a versioned YAML document plus per-dataset presets."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .lasso import DEFAULT_KAPPA_FACTORS, LassoConfig
from .neural import SparsityConfig, TrainConfig
from .svm import SvmGrid
from .wlppd import WlppdConfig

CONFIG_VERSION = 1

ABLATION_STAGES = ("OF", "DF", "HF", "HF&L1", "full")
AUTOENCODER_STAGES = ("sae", "ssae", "hessae", "hesae")
BASELINE_STAGES = ("pca", "lpp", "lasso")
ALL_STAGES = ABLATION_STAGES + AUTOENCODER_STAGES + BASELINE_STAGES

# fixed offsets from the per-repeat seed (master + repeat) for each consumer
SEED_OFFSETS = {"split": 0, "hessae": 101, "sae": 202, "ssae": 303, "hesae": 404,
                "lasso": 505, "svm": 606, "ensemble": 707, "baseline": 808}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HessaeSettings:
    arch: tuple = (80, 30, 10)
    lam: float = 1e-4
    beta: float = 4.0
    rho: float = 0.05
    epochs: int = 1000
    finetune_epochs: int | None = None  # defaults to ``epochs``
    pretrain_lr: float = 0.1
    finetune_lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32

    def sparsity(self) -> SparsityConfig:
        return SparsityConfig(self.rho, self.beta, self.lam)

    def pretrain_cfg(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.pretrain_lr, self.momentum, self.batch_size)

    def finetune_cfg(self) -> TrainConfig:
        return TrainConfig(self.finetune_epochs or self.epochs, self.finetune_lr, self.momentum,
                           self.batch_size)


@dataclass(frozen=True)
class LassoSettings:
    kappa_factors: tuple = DEFAULT_KAPPA_FACTORS
    val_fraction: float = 0.2
    max_iters: int = 5000
    tol: float = 1e-8

    def lasso_cfg(self) -> LassoConfig:
        return LassoConfig(0.0, self.max_iters, self.tol)


@dataclass(frozen=True)
class EnsembleSettings:
    K: int = 5
    delta_rows: float = 0.7
    delta_features: float = 0.5
    per_class_weights: bool = False


@dataclass(frozen=True)
class BaselineSettings:
    k_fractions: tuple = (0.25, 0.5, 0.75)
    lpp_k_nn: int = 5


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    label_col: object = -1
    name: str = ""
    test_fraction: float = 1.0 / 3.0
    repeats: int = 5
    seed: int = 0
    stages: tuple = ABLATION_STAGES
    hessae: HessaeSettings = field(default_factory=HessaeSettings)
    lasso: LassoSettings = field(default_factory=LassoSettings)
    wlppd: WlppdConfig = field(default_factory=WlppdConfig)
    svm: SvmGrid = field(default_factory=SvmGrid)
    ensemble: EnsembleSettings = field(default_factory=EnsembleSettings)
    baselines: BaselineSettings = field(default_factory=BaselineSettings)

    def validate(self) -> "ExperimentConfig":
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        bad = [s for s in self.stages if s not in ALL_STAGES]
        if bad:
            raise ConfigError(f"unknown stage(s) {bad}; choose from {list(ALL_STAGES)}")
        if not self.hessae.arch or min(self.hessae.arch) < 1:
            raise ConfigError("hessae.arch needs positive layer sizes")
        try:
            self.hessae.sparsity()
            self.hessae.pretrain_cfg()
            self.hessae.finetune_cfg()
        except ValueError as exc:
            raise ConfigError(f"hessae: {exc}") from exc
        e = self.ensemble
        if e.K < 1 or not (0 < e.delta_rows <= 1 and 0 < e.delta_features <= 1):
            raise ConfigError("ensemble needs K >= 1 and sampling ratios in (0, 1]")
        w = self.wlppd
        if not (0 < w.r_b <= 1 and 0 < w.r_w <= 1) or w.P < 1 or w.k_nn < 1:
            raise ConfigError("wlppd needs r_b, r_w in (0, 1], P >= 1, k_nn >= 1")
        if not self.svm.C_values or self.svm.folds < 2:
            raise ConfigError("svm needs at least one C value and >= 2 folds")
        if not self.lasso.kappa_factors or not 0 < self.lasso.val_fraction < 1:
            raise ConfigError("lasso needs kappa factors and val_fraction in (0, 1)")
        return self

    def seed_for(self, repeat: int, what: str) -> int:
        return self.seed + repeat + SEED_OFFSETS[what]

    def to_dict(self) -> dict:
        d = asdict(self)
        d = _tuples_to_lists(d)
        d["version"] = CONFIG_VERSION
        return d


def _tuples_to_lists(obj):
    if isinstance(obj, dict):
        return {k: _tuples_to_lists(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tuples_to_lists(v) for v in obj]
    return obj


def _build(cls, data: dict, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_SECTIONS = {"hessae": HessaeSettings, "lasso": LassoSettings, "wlppd": WlppdConfig,
             "svm": SvmGrid, "ensemble": EnsembleSettings, "baselines": BaselineSettings}


def from_dict(data: dict) -> ExperimentConfig:
    data = copy.deepcopy(data or {})
    version = data.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config version {version} not supported (expected {CONFIG_VERSION})")
    preset_name = data.pop("preset", None)
    base = preset(preset_name) if preset_name else ExperimentConfig()
    top = {}
    for key, value in data.items():
        if key in _SECTIONS:
            merged = {**asdict(getattr(base, key)), **(value or {})}
            top[key] = _build(_SECTIONS[key], merged, key)
        elif key in {f.name for f in fields(ExperimentConfig)}:
            top[key] = tuple(value) if isinstance(value, list) else value
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    return replace(base, **top).validate()


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    data = yaml.safe_load(text) if text.strip() else {}
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


# Hidden sizes and (lambda, beta, rho, epochs) per dataset.
PRESETS = {
    "pendigits": dict(name="pendigits", dataset="data/pendigits.csv",
                      hessae=HessaeSettings((80, 30, 10), 1e-4, 4.0, 0.05, 1000)),
    "statlog": dict(name="statlog", dataset="data/statlog.csv",
                    hessae=HessaeSettings((120, 60, 20), 1e-3, 5.0, 0.05, 1000)),
    "urban": dict(name="urban", dataset="data/urban.csv",
                  hessae=HessaeSettings((600, 300, 80), 1e-3, 2.0, 0.07, 600)),
    "ad": dict(name="ad", dataset="surrogate:ad",
               hessae=HessaeSettings((100, 50, 25), 1e-5, 5.0, 0.02, 500)),
}


def preset(name: str) -> ExperimentConfig:
    try:
        return ExperimentConfig(**PRESETS[name.lower()])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
