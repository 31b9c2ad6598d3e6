"""Epoch-level training loops for the autoencoders and the stacked classifier.

Parameters live in one flat float64 vector so the loops stay numba-friendly.
Autoencoder layout: ``[W1 (h x n), b1 (h), W2 (n x h), b2 (n)]``.

Stacked classifier layout: layer ``l`` has weights ``d_l x m_l`` at
``w_off[l]`` and bias ``d_l`` at ``b_off[l]``. Its input is
``concat(x, a_{l-1})[sel_l]`` where ``a_{-1}`` is empty and
``sel_l = sel[s_off[l]:s_off[l + 1]]``. The last layer is softmax, the others
sigmoid.
"""
import numpy as np

from ._backend import njit

KL_EPS = 1e-8


@njit
def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


@njit
def _softmax_rows(z):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        m = z[i].max()
        e = np.exp(z[i] - m)
        out[i] = e / e.sum()
    return out


@njit
def ae_value_and_grad(X, theta, grad, n_in, n_hid, lam, beta, rho, want_grad):
    """Sparse autoencoder objective on the rows of ``X``; fills ``grad`` in place."""
    N = X.shape[0]
    o1 = n_hid * n_in
    o2 = o1 + n_hid
    o3 = o2 + n_in * n_hid
    W1 = theta[0:o1].reshape((n_hid, n_in))
    b1 = theta[o1:o2]
    W2 = theta[o2:o3].reshape((n_in, n_hid))
    b2 = theta[o3:o3 + n_in]

    H = sigmoid(np.dot(X, W1.T) + b1)
    R = sigmoid(np.dot(H, W2.T) + b2)
    diff = R - X
    rho_hat = np.clip(H.sum(axis=0) / N, KL_EPS, 1.0 - KL_EPS)
    kl = np.sum(rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat)))
    loss = np.sum(diff * diff) / N + lam * (np.sum(W1 * W1) + np.sum(W2 * W2)) + beta * kl
    if not want_grad:
        return loss

    d3 = (2.0 / N) * diff * R * (1.0 - R)
    gW2 = grad[o2:o3].reshape((n_in, n_hid))
    gW2[:, :] = np.dot(d3.T, H) + 2.0 * lam * W2
    grad[o3:o3 + n_in] = d3.sum(axis=0)
    sparse_term = (beta / N) * (-rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat))
    d2 = (np.dot(d3, W2) + sparse_term) * H * (1.0 - H)
    gW1 = grad[0:o1].reshape((n_hid, n_in))
    gW1[:, :] = np.dot(d2.T, X) + 2.0 * lam * W1
    grad[o1:o2] = d2.sum(axis=0)
    return loss


@njit
def ae_epoch(X, order, theta, vel, n_in, n_hid, lr, mom, lam, beta, rho, batch):
    """One pass of momentum mini-batch descent; ``rho_hat`` is per batch."""
    N = X.shape[0]
    grad = np.zeros_like(theta)
    for s in range(0, N, batch):
        e = min(s + batch, N)
        xb = X[order[s:e]]
        ae_value_and_grad(xb, theta, grad, n_in, n_hid, lam, beta, rho, True)
        vel *= mom
        vel -= lr * grad
        theta += vel


@njit
def stack_forward(X, theta, dims, in_dims, w_off, b_off, sel, s_off):
    """Activations of every layer; the last entry holds softmax probabilities."""
    n = X.shape[1]
    L = dims.shape[0]
    acts = []
    prev = np.zeros((X.shape[0], 0))
    for l in range(L):
        d = dims[l]
        m = in_dims[l]
        W = theta[w_off[l]:w_off[l] + d * m].reshape((d, m))
        b = theta[b_off[l]:b_off[l] + d]
        idx = sel[s_off[l]:s_off[l + 1]]
        inp = np.empty((X.shape[0], m))
        for j in range(m):
            k = idx[j]
            if k < n:
                inp[:, j] = X[:, k]
            else:
                inp[:, j] = prev[:, k - n]
        z = np.dot(inp, W.T) + b
        if l == L - 1:
            a = _softmax_rows(z)
        else:
            a = sigmoid(z)
        acts.append(inp)
        acts.append(a)
        prev = a
    return acts


@njit
def stack_value_and_grad(X, Y, theta, grad, dims, in_dims, w_off, b_off, sel, s_off, want_grad):
    """Mean cross-entropy of the stacked classifier; ``Y`` is one-hot."""
    N = X.shape[0]
    n = X.shape[1]
    L = dims.shape[0]
    acts = stack_forward(X, theta, dims, in_dims, w_off, b_off, sel, s_off)
    P = acts[2 * L - 1]
    loss = -np.sum(Y * np.log(np.maximum(P, 1e-300))) / N
    if not want_grad:
        return loss
    dz = (P - Y) / N
    for l in range(L - 1, -1, -1):
        d = dims[l]
        m = in_dims[l]
        W = theta[w_off[l]:w_off[l] + d * m].reshape((d, m))
        inp = acts[2 * l]
        gW = grad[w_off[l]:w_off[l] + d * m].reshape((d, m))
        gW[:, :] = np.dot(dz.T, inp)
        grad[b_off[l]:b_off[l] + d] = dz.sum(axis=0)
        if l == 0:
            break
        d_inp = np.dot(dz, W)
        prev = acts[2 * l - 1]
        d_prev = np.zeros_like(prev)
        idx = sel[s_off[l]:s_off[l + 1]]
        for j in range(m):
            k = idx[j]
            if k >= n:
                d_prev[:, k - n] += d_inp[:, j]
        dz = d_prev * prev * (1.0 - prev)
    return loss


@njit
def stack_epoch(X, Y, order, theta, vel, dims, in_dims, w_off, b_off, sel, s_off, lr, mom, batch):
    N = X.shape[0]
    grad = np.zeros_like(theta)
    for s in range(0, N, batch):
        e = min(s + batch, N)
        rows = order[s:e]
        stack_value_and_grad(X[rows], Y[rows], theta, grad, dims, in_dims, w_off, b_off,
                             sel, s_off, True)
        vel *= mom
        vel -= lr * grad
        theta += vel
