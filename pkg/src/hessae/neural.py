"""Dense sigmoid layers, sparse autoencoder objective, backprop and descent."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _nn_kernels as K

log = logging.getLogger(__name__)

KL_EPS = K.KL_EPS


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class DenseLayer:
    weights: np.ndarray  # d_out x d_in
    bias: np.ndarray

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class SparsityConfig:
    rho: float = 0.05
    beta: float = 3.0
    lam: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.beta < 0 or self.lam < 0:
            raise ValueError("beta and lam must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 32
    max_halvings: int = 10

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or not 0.0 <= self.momentum < 1.0:
            raise ValueError("need learning_rate > 0 and momentum in [0, 1)")


def init_layer(d_in: int, d_out: int, rng: np.random.Generator) -> DenseLayer:
    r = np.sqrt(6.0 / (d_in + d_out))
    return DenseLayer(rng.uniform(-r, r, size=(d_out, d_in)), np.zeros(d_out))


def sigmoid(z):
    return expit(z)


def forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.d_in:
        raise ValueError(f"input dim {x.shape[-1]} does not match layer d_in {layer.d_in}")
    return expit(x @ layer.weights.T + layer.bias)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def kl_sparsity(rho: float, rho_hat) -> float:
    """Sum of Bernoulli KL divergences KL(rho || rho_hat_j)."""
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    q = np.clip(np.asarray(rho_hat, dtype=np.float64), KL_EPS, 1.0 - KL_EPS)
    return float(np.sum(rho * np.log(rho / q) + (1 - rho) * np.log((1 - rho) / (1 - q))))


def ae_loss(x_batch, recon, encoder: DenseLayer, decoder: DenseLayer, rho_hat,
            cfg: SparsityConfig) -> float:
    x_batch = np.atleast_2d(x_batch)
    recon = np.atleast_2d(recon)
    if x_batch.shape != recon.shape:
        raise ValueError("reconstruction shape differs from input")
    n = x_batch.shape[0]
    rec = np.sum((x_batch - recon) ** 2) / n
    decay = cfg.lam * (np.sum(encoder.weights ** 2) + np.sum(decoder.weights ** 2))
    return float(rec + decay + cfg.beta * kl_sparsity(cfg.rho, rho_hat))


def pack_ae(encoder: DenseLayer, decoder: DenseLayer) -> np.ndarray:
    return np.concatenate([encoder.weights.ravel(), encoder.bias,
                           decoder.weights.ravel(), decoder.bias])


def unpack_ae(theta: np.ndarray, n_in: int, n_hid: int):
    o1 = n_hid * n_in
    o2 = o1 + n_hid
    o3 = o2 + n_in * n_hid
    enc = DenseLayer(theta[:o1].reshape(n_hid, n_in).copy(), theta[o1:o2].copy())
    dec = DenseLayer(theta[o2:o3].reshape(n_in, n_hid).copy(), theta[o3:o3 + n_in].copy())
    return enc, dec


def backprop_ae(x_batch, encoder: DenseLayer, decoder: DenseLayer, cfg: SparsityConfig):
    """Loss and exact gradients of the sparse autoencoder objective.

    Returns ``(loss, grads)`` with ``grads`` keyed ``W1, b1, W2, b2`` in the
    shapes of the corresponding layer arrays. ``rho_hat`` is the mean hidden
    activation over ``x_batch`` and its dependence on the encoder is included.
    """
    x = np.ascontiguousarray(np.atleast_2d(x_batch), dtype=np.float64)
    n_in, n_hid = encoder.d_in, encoder.d_out
    if x.shape[1] != n_in or decoder.d_in != n_hid or decoder.d_out != n_in:
        raise ValueError("layer shapes are inconsistent with the input")
    theta = pack_ae(encoder, decoder)
    grad = np.zeros_like(theta)
    loss = K.ae_value_and_grad(x, theta, grad, n_in, n_hid, cfg.lam, cfg.beta, cfg.rho, True)
    enc_g, dec_g = unpack_ae(grad, n_in, n_hid)
    return float(loss), {"W1": enc_g.weights, "b1": enc_g.bias,
                         "W2": dec_g.weights, "b2": dec_g.bias}


def finite_difference_gradient(loss_fn, params, h: float = 1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. each array in ``params``.

    Arrays are perturbed in place and restored, so ``loss_fn`` should read them
    by reference.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    out = []
    for p in params:
        g = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def gd_step(params, grads, state, cfg: TrainConfig):
    """Momentum step ``v <- m v - lr g; p <- p + v``; returns new params and velocities."""
    if state is None:
        state = [np.zeros_like(np.asarray(p, dtype=np.float64)) for p in params]
    new_state = [cfg.momentum * v - cfg.learning_rate * np.asarray(g) for v, g in zip(state, grads)]
    new_params = [np.asarray(p) + v for p, v in zip(params, new_state)]
    return new_params, new_state


@dataclass
class TrainHistory:
    losses: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)
    halvings: int = 0
    stopped_early: bool = False


def run_guarded_descent(theta, epoch_fn, loss_fn, cfg: TrainConfig, rng, n_rows,
                        what="model", lr_recovery=1.05, divergence_rtol=1e-2):
    """Drive ``epoch_fn`` for ``cfg.epochs`` epochs with the lr-halving guard.

    After each epoch the full-data loss is recomputed. If it went up the epoch
    is undone, the learning rate halved, the velocity cleared and the epoch
    retried. Accepted epochs let the rate creep back up by ``lr_recovery``
    (capped at the configured rate). After ``cfg.max_halvings`` consecutive
    failures the run either stops at the last accepted parameters (a plateau:
    the increase is below ``divergence_rtol``) or raises
    :class:`TrainingDivergence`.
    """
    vel = np.zeros_like(theta)
    lr = cfg.learning_rate
    hist = TrainHistory()
    prev = float(loss_fn(theta))
    if not np.isfinite(prev):
        raise TrainingDivergence(f"{what}: non-finite initial loss")
    hist.losses.append(prev)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_rows)
        tries = 0
        while True:
            saved_theta = theta.copy()
            epoch_fn(order, theta, vel, lr)
            cur = float(loss_fn(theta))
            if np.isfinite(cur) and cur <= prev:
                break
            theta[:] = saved_theta
            vel[:] = 0.0
            tries += 1
            hist.halvings += 1
            if tries > cfg.max_halvings:
                if np.isfinite(cur) and cur - prev <= divergence_rtol * max(1e-12, abs(prev)):
                    hist.stopped_early = True
                    log.debug("%s: converged at epoch %d", what, epoch)
                    return theta, hist
                raise TrainingDivergence(
                    f"{what}: loss still increasing after {cfg.max_halvings} halvings "
                    f"(epoch {epoch}, {prev:.6g} -> {cur:.6g})")
            lr *= 0.5
        prev = cur
        hist.losses.append(cur)
        hist.learning_rates.append(lr)
        lr = min(cfg.learning_rate, lr * lr_recovery)
    return theta, hist


def train_autoencoder(X: np.ndarray, n_hidden: int, sparsity: SparsityConfig,
                      cfg: TrainConfig, rng: np.random.Generator):
    """Greedy sparse autoencoder fit. Returns ``(encoder, decoder, history)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    N, n_in = X.shape
    enc = init_layer(n_in, n_hidden, rng)
    dec = init_layer(n_hidden, n_in, rng)
    theta = pack_ae(enc, dec)
    batch = min(cfg.batch_size, N)
    scratch = np.zeros_like(theta)
    lam, beta, rho = sparsity.lam, sparsity.beta, sparsity.rho

    def epoch_fn(order, th, vel, lr):
        K.ae_epoch(X, order, th, vel, n_in, n_hidden, lr, cfg.momentum, lam, beta, rho, batch)

    def loss_fn(th):
        return K.ae_value_and_grad(X, th, scratch, n_in, n_hidden, lam, beta, rho, False)

    theta, hist = run_guarded_descent(theta, epoch_fn, loss_fn, cfg, rng, N,
                                      what=f"autoencoder {n_in}->{n_hidden}")
    enc, dec = unpack_ae(theta, n_in, n_hidden)
    return enc, dec, hist


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > n_classes):
        raise ValueError("labels must lie in 1..C")
    Y = np.zeros((labels.shape[0], n_classes))
    Y[np.arange(labels.shape[0]), labels - 1] = 1.0
    return Y


class StackLayout:
    """Offsets describing a flat-vector stacked classifier (see ``_nn_kernels``)."""

    def __init__(self, n_inputs: int, dims, selections):
        self.n_inputs = int(n_inputs)
        self.dims = np.asarray(dims, dtype=np.int64)
        sels = [np.asarray(s, dtype=np.int64) for s in selections]
        if len(sels) != len(self.dims):
            raise ValueError("need one selection per layer")
        self.in_dims = np.array([len(s) for s in sels], dtype=np.int64)
        self.sel = np.concatenate(sels) if sels else np.zeros(0, dtype=np.int64)
        self.s_off = np.concatenate([[0], np.cumsum(self.in_dims)]).astype(np.int64)
        w_off, b_off = [], []
        o = 0
        for d, m in zip(self.dims, self.in_dims):
            w_off.append(o)
            o += d * m
            b_off.append(o)
            o += d
        self.w_off = np.array(w_off, dtype=np.int64)
        self.b_off = np.array(b_off, dtype=np.int64)
        self.size = o

    def args(self):
        return self.dims, self.in_dims, self.w_off, self.b_off, self.sel, self.s_off

    def pack(self, layers) -> np.ndarray:
        theta = np.zeros(self.size)
        for l, layer in enumerate(layers):
            d, m = self.dims[l], self.in_dims[l]
            if layer.weights.shape != (d, m):
                raise ValueError(f"layer {l} has shape {layer.weights.shape}, expected {(d, m)}")
            theta[self.w_off[l]:self.w_off[l] + d * m] = layer.weights.ravel()
            theta[self.b_off[l]:self.b_off[l] + d] = layer.bias
        return theta

    def unpack(self, theta):
        out = []
        for l in range(len(self.dims)):
            d, m = self.dims[l], self.in_dims[l]
            out.append(DenseLayer(theta[self.w_off[l]:self.w_off[l] + d * m].reshape(d, m).copy(),
                                  theta[self.b_off[l]:self.b_off[l] + d].copy()))
        return out


def train_stack(X, labels, n_classes, layout: StackLayout, layers, cfg: TrainConfig,
                rng: np.random.Generator, what="classifier"):
    """Cross-entropy fine-tuning of a stacked classifier. Returns ``(layers, history)``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = one_hot(labels, n_classes)
    theta = layout.pack(layers)
    args = layout.args()
    batch = min(cfg.batch_size, X.shape[0])
    scratch = np.zeros_like(theta)

    def epoch_fn(order, th, vel, lr):
        K.stack_epoch(X, Y, order, th, vel, *args, lr, cfg.momentum, batch)

    def loss_fn(th):
        return K.stack_value_and_grad(X, Y, th, scratch, *args, False)

    theta, hist = run_guarded_descent(theta, epoch_fn, loss_fn, cfg, rng, X.shape[0], what=what)
    return layout.unpack(theta), hist


def stack_predict_proba(X, layout: StackLayout, layers) -> np.ndarray:
    theta = layout.pack(layers)
    acts = K.stack_forward(np.ascontiguousarray(X, dtype=np.float64), theta, *layout.args())
    return acts[-1]


def train_softmax_head(features, labels, n_classes: int, cfg: TrainConfig | None = None,
                       rng: np.random.Generator | None = None):
    """Multinomial logistic layer on fixed features. Returns ``(layer, history)``."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    cfg = cfg or TrainConfig(epochs=200, learning_rate=0.1)
    rng = rng if rng is not None else np.random.default_rng(0)
    d = features.shape[1]
    layout = StackLayout(d, [n_classes], [np.arange(d)])
    head = DenseLayer(np.zeros((n_classes, d)), np.zeros(n_classes))
    (head,), hist = train_stack(features, labels, n_classes, layout, [head], cfg, rng,
                                what="softmax head")
    return head, hist


def softmax_predict(head: DenseLayer, features) -> np.ndarray:
    return softmax(np.asarray(features) @ head.weights.T + head.bias)
