"""Hybrid-feature embedded stacked sparse autoencoder.

Between consecutive autoencoders an embedding unit concatenates the original
input with the previous hidden code and keeps the highest-variance
coordinates, so that layer ``k`` sees as many inputs as layer ``k-1`` had
hidden units. With ``embed=False`` the same machinery builds a plain stacked
(sparse) autoencoder whose layer ``k`` reads only the previous code.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neural as nn
from .dataset import Dataset


@dataclass(frozen=True)
class EmbeddingUnit:
    """Pure selection ``concat(x, h)[selected]`` (0-based indices)."""

    selected: np.ndarray
    n_original: int
    n_hidden: int

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=np.int64)
        if len(np.unique(sel)) != len(sel):
            raise ValueError("embedding indices must be distinct")
        if sel.size and (sel.min() < 0 or sel.max() >= self.n_original + self.n_hidden):
            raise ValueError("embedding index out of range")
        sel.setflags(write=False)
        object.__setattr__(self, "selected", sel)

    @property
    def d_out(self) -> int:
        return len(self.selected)

    def matrix(self) -> np.ndarray:
        """The equivalent 0/1 matrix G, shape (n + d) x d_out."""
        G = np.zeros((self.n_original + self.n_hidden, self.d_out))
        G[self.selected, np.arange(self.d_out)] = 1.0
        return G


def column_variances(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] < 2:
        return np.zeros(M.shape[1])
    return M.var(axis=0, ddof=1)


def build_embedding(concat_data: np.ndarray, d_out: int, n_original: int | None = None
                    ) -> EmbeddingUnit:
    """Keep the ``d_out`` columns of largest variance, largest first.

    Ties go to the lower column index. ``n_original`` only records how the
    columns split between original and hidden features (defaults to all
    original).
    """
    concat_data = np.atleast_2d(concat_data)
    width = concat_data.shape[1]
    if d_out > width:
        raise ValueError(f"cannot select {d_out} of {width} columns")
    var = column_variances(concat_data)
    order = np.argsort(-var, kind="stable")[:d_out]
    n_original = width if n_original is None else n_original
    return EmbeddingUnit(order, n_original, width - n_original)


def apply_embedding(unit: EmbeddingUnit, x: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if x.shape[-1] != unit.n_original or h_prev.shape[-1] != unit.n_hidden:
        raise ValueError("input dims do not match the embedding unit")
    return np.concatenate([x, h_prev], axis=-1)[..., unit.selected]


@dataclass
class HessaeModel:
    n_inputs: int
    arch: tuple
    encoders: list
    embedding_units: list  # one per layer k >= 2; None entries for plain stacking
    sparsity: nn.SparsityConfig
    head: nn.DenseLayer | None = None
    n_classes: int = 0
    pretrain_history: list = field(default_factory=list)
    finetune_history: object = None
    head_history: object = None

    @property
    def embedded(self) -> bool:
        return any(u is not None for u in self.embedding_units)

    @property
    def n_deep(self) -> int:
        return self.arch[-1]

    def selections(self):
        """Per-layer input selections into ``concat(x, a_{l-1})``, head included."""
        n = self.n_inputs
        sels = [np.arange(n)]
        for k in range(1, len(self.arch)):
            unit = self.embedding_units[k - 1]
            if unit is None:
                sels.append(n + np.arange(self.arch[k - 1]))
            else:
                sels.append(np.asarray(unit.selected))
        sels.append(n + np.arange(self.arch[-1]))
        return sels

    def layout(self) -> nn.StackLayout:
        return nn.StackLayout(self.n_inputs, list(self.arch) + [self.n_classes], self.selections())


def _check_input(model: HessaeModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} input features, got {X.shape[-1]}")
    return X


def hidden_codes(model: HessaeModel, X) -> list:
    X = _check_input(model, X)
    codes = []
    prev = X
    for k, enc in enumerate(model.encoders):
        if k > 0:
            unit = model.embedding_units[k - 1]
            inp = prev if unit is None else apply_embedding(unit, X, prev)
        else:
            inp = X
        prev = nn.forward(enc, inp)
        codes.append(prev)
    return codes


def _rescale_columns(M: np.ndarray):
    lo = M.min(axis=0)
    span = M.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    S = (M - lo) / safe
    S[:, span <= 0] = 0.0
    return np.ascontiguousarray(S), lo, span


def _fold_input_scaling(enc: nn.DenseLayer, lo, span) -> nn.DenseLayer:
    """Encoder on raw inputs equivalent to ``enc`` on min-max scaled inputs."""
    scale = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 0.0)
    W = enc.weights * scale
    return nn.DenseLayer(W, enc.bias - W @ lo)


def pretrain(train, arch, sparsity: nn.SparsityConfig, cfg: nn.TrainConfig,
             rng: np.random.Generator, embed: bool = True,
             rescale_inputs: bool = True) -> HessaeModel:
    """Greedy layer-wise pre-training.

    Layer 1 is a sparse autoencoder on the inputs. For each later layer an
    embedding unit is fitted on ``concat(X, H_prev)`` (when ``embed``) and the
    next autoencoder learns to reconstruct the embedded input.

    With ``rescale_inputs`` each autoencoder sees its input min-max scaled to
    [0, 1] column-wise; the scaling is folded into the encoder afterwards so
    the stacked network consumes raw codes. Without it, sparse codes have so
    little spread that upper layers settle on constant outputs.
    """
    X = train.features if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    X = np.ascontiguousarray(X)
    arch = tuple(int(a) for a in arch)
    if len(arch) < 1:
        raise ValueError("need at least one hidden layer")
    n = X.shape[1]
    encoders, units, hists = [], [], []
    inp = X
    H = None
    for k, d in enumerate(arch):
        if k > 0:
            if embed:
                unit = build_embedding(np.hstack([X, H]), arch[k - 1], n_original=n)
                inp = apply_embedding(unit, X, H)
            else:
                unit = None
                inp = H
            units.append(unit)
        if rescale_inputs:
            scaled, lo, span = _rescale_columns(inp)
            enc, _dec, hist = nn.train_autoencoder(scaled, d, sparsity, cfg, rng)
            enc = _fold_input_scaling(enc, lo, span)
        else:
            enc, _dec, hist = nn.train_autoencoder(inp, d, sparsity, cfg, rng)
        encoders.append(enc)
        hists.append(hist)
        H = nn.forward(enc, inp)
    return HessaeModel(n, arch, encoders, units, sparsity, pretrain_history=hists)


def finetune(model: HessaeModel, train: Dataset, cfg: nn.TrainConfig, rng: np.random.Generator,
             head_cfg: nn.TrainConfig | None = None) -> HessaeModel:
    """Add a softmax head on the last code and train the whole stack on cross-entropy.

    Embedding selections are frozen; only encoder and head parameters move.
    """
    X = _check_input(model, train.features)
    C = train.n_classes
    top = hidden_codes(model, X)[-1]
    head_cfg = head_cfg or nn.TrainConfig(epochs=max(50, cfg.epochs // 4), learning_rate=0.1,
                                          momentum=cfg.momentum, batch_size=cfg.batch_size)
    head, head_hist = nn.train_softmax_head(top, train.labels, C, head_cfg, rng)
    tuned = HessaeModel(model.n_inputs, model.arch, model.encoders, model.embedding_units,
                        model.sparsity, head, C, model.pretrain_history, None, head_hist)
    layout = tuned.layout()
    layers, hist = nn.train_stack(X, train.labels, C, layout, list(model.encoders) + [head], cfg,
                                  rng, what="fine-tune")
    tuned.encoders = layers[:-1]
    tuned.head = layers[-1]
    tuned.finetune_history = hist
    return tuned


def training_cross_entropy(model: HessaeModel, data: Dataset) -> float:
    P = predict_proba(model, data.features)
    return float(-np.mean(np.log(np.maximum(P[np.arange(data.n_samples), data.labels - 1],
                                            1e-300))))


def predict_proba(model: HessaeModel, X) -> np.ndarray:
    if model.head is None:
        raise ValueError("model has no softmax head; run finetune first")
    X = _check_input(model, X)
    return nn.stack_predict_proba(X, model.layout(), list(model.encoders) + [model.head])


def predict(model: HessaeModel, X) -> np.ndarray:
    return np.argmax(predict_proba(model, X), axis=1) + 1


def extract_deep_features(model: HessaeModel, data) -> np.ndarray:
    X = data.features if isinstance(data, Dataset) else data
    return hidden_codes(model, X)[-1]


def hybrid_features(original: np.ndarray, deep: np.ndarray) -> np.ndarray:
    original = np.atleast_2d(np.asarray(original, dtype=np.float64))
    deep = np.asarray(deep, dtype=np.float64).reshape(original.shape[0], -1) \
        if np.size(deep) == 0 else np.atleast_2d(np.asarray(deep, dtype=np.float64))
    if original.shape[0] != deep.shape[0]:
        raise ValueError("row counts differ")
    return np.hstack([original, deep])


def train_hessae(train: Dataset, arch, sparsity: nn.SparsityConfig, pre_cfg: nn.TrainConfig,
                 fine_cfg: nn.TrainConfig, seed: int, embed: bool = True) -> HessaeModel:
    rng = np.random.default_rng(seed)
    model = pretrain(train, arch, sparsity, pre_cfg, rng, embed=embed)
    return finetune(model, train, fine_cfg, rng)
