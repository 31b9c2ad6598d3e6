"""Fast property checks with brute-force oracles, run by ``hessae selftest``.

Each check returns a :class:`CheckResult`; the oracles here are written
independently of the code they audit (plain loops, enumeration, closed forms).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import ensemble as ens
from . import lasso as l1
from . import neural as nn
from . import svm as svm_mod
from . import wlppd as wl
from .model import build_embedding


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(n_cases: int = 50, seed: int = 0, tol: float = 1e-5) -> CheckResult:
    """Backprop against central differences of an independently written loss."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        n_in = int(rng.integers(2, 9))
        n_hid = int(rng.integers(1, 9))
        N = int(rng.integers(1, 17))
        cfg = nn.SparsityConfig(rho=float(rng.uniform(0.02, 0.5)), beta=float(rng.uniform(0.1, 5)),
                                lam=float(rng.uniform(1e-4, 1e-1)))
        x = rng.random((N, n_in))
        enc = nn.DenseLayer(rng.normal(scale=0.8, size=(n_hid, n_in)), rng.normal(size=n_hid))
        dec = nn.DenseLayer(rng.normal(scale=0.8, size=(n_in, n_hid)), rng.normal(size=n_in))

        def loss():
            h = 1.0 / (1.0 + np.exp(-(x @ enc.weights.T + enc.bias)))
            r = 1.0 / (1.0 + np.exp(-(h @ dec.weights.T + dec.bias)))
            q = np.clip(h.mean(axis=0), 1e-8, 1 - 1e-8)
            kl = np.sum(cfg.rho * np.log(cfg.rho / q)
                        + (1 - cfg.rho) * np.log((1 - cfg.rho) / (1 - q)))
            return (np.sum((x - r) ** 2) / N
                    + cfg.lam * (np.sum(enc.weights ** 2) + np.sum(dec.weights ** 2))
                    + cfg.beta * kl)

        _, g = nn.backprop_ae(x, enc, dec, cfg)
        fd = nn.finite_difference_gradient(loss, [enc.weights, enc.bias, dec.weights, dec.bias])
        a = np.concatenate([g["W1"].ravel(), g["b1"], g["W2"].ravel(), g["b2"]])
        b = np.concatenate([f.ravel() for f in fd])
        worst = max(worst, _rel_err(a, b))
    return CheckResult("backprop vs finite differences", worst <= tol,
                       f"max relative error {worst:.2e} over {n_cases} autoencoders (tol {tol:g})")


def check_embedding(n_cases: int = 100, seed: int = 1) -> CheckResult:
    """Selected set maximises tr(G' Cov G) over all subsets of the same size."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(n_cases):
        width = int(rng.integers(2, 9))
        n = int(rng.integers(1, width))
        d_out = int(rng.integers(1, width + 1))
        M = rng.normal(size=(int(rng.integers(3, 12)), width)) * rng.uniform(0.1, 3, width)
        cov = np.cov(M, rowvar=False)
        unit = build_embedding(M, d_out, n_original=n)
        G = unit.matrix()
        got = np.trace(G.T @ cov @ G)
        best = max(sum(cov[j, j] for j in s) for s in itertools.combinations(range(width), d_out))
        if got < best - 1e-12 * max(1.0, abs(best)):
            failures += 1
    return CheckResult("embedding unit variance optimality", failures == 0,
                       f"{failures} of {n_cases} instances beaten by brute-force enumeration")


def check_soft_threshold(n_cases: int = 1000, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    step = 1e-4
    for _ in range(n_cases):
        u = float(rng.uniform(-3, 3))
        M = float(rng.uniform(0.5, 5))
        kappa = float(rng.uniform(0, 5))
        grid = np.arange(-4.0, 4.0 + step, step)
        obj = 0.5 * M * (grid - u) ** 2 + kappa * np.abs(grid)
        w_grid = grid[np.argmin(obj)]
        worst = max(worst, abs(l1.soft_threshold(u, kappa / M) - w_grid))
    ok_prox = worst <= step

    # kappa = 0 against least squares with an intercept on standardised columns
    worst_ls = 0.0
    for _ in range(20):
        X = rng.normal(size=(10, 3)) * rng.uniform(0.5, 3, 3) + rng.normal(size=3)
        y = rng.normal(size=10)
        w = l1.lasso_pgd(X, y, l1.LassoConfig(0.0, max_iters=200_000, tol=1e-13))
        Z = (X - X.mean(0)) / X.std(0)
        A = np.hstack([Z, np.ones((10, 1))])
        ref = np.linalg.solve(A.T @ A, A.T @ y)[:3]
        worst_ls = max(worst_ls, float(np.max(np.abs(w - ref))))
    ok_ls = worst_ls <= 1e-6
    return CheckResult("soft-threshold prox and kappa=0 lasso", ok_prox and ok_ls,
                       f"prox vs grid {worst:.1e} (grid {step:g}); lasso vs least squares "
                       f"{worst_ls:.1e} (tol 1e-6)")


def _lda_scatter(X, y):
    mu = X.mean(axis=0)
    d = X.shape[1]
    Sb = np.zeros((d, d))
    Sw = np.zeros((d, d))
    for c in np.unique(y):
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        Sb += len(Xc) * np.outer(mc - mu, mc - mu)
        for x in Xc:
            Sw += np.outer(x - mc, x - mc)
    return Sb, Sw


def check_wlppd(n_cases: int = 30, seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_res = worst_graph = worst_scatter = 0.0
    for _ in range(n_cases):
        d = int(rng.integers(2, 7))
        N = int(rng.integers(12, 40))
        C = int(rng.integers(2, 4))
        X = rng.normal(size=(N, d))
        y = np.concatenate([np.arange(1, C + 1), rng.integers(1, C + 1, N - C)])

        ls = wl.local_scatter(X, y, 1.0, 1.0, C)
        Sb, Sw = _lda_scatter(X, y)
        worst_scatter = max(worst_scatter, np.max(np.abs(ls.between - Sb)),
                            np.max(np.abs(ls.within - Sw)))

        g = wl.knn_affinity(X, int(rng.integers(1, min(6, N - 1) + 1)))
        A = g.affinity.toarray()
        W = rng.normal(size=(d, int(rng.integers(1, d + 1))))
        P = X @ W
        double = sum(A[i, j] * np.sum((P[i] - P[j]) ** 2) for i in range(N) for j in range(N))
        trace = 2.0 * np.trace(W.T @ g.quadratic_form(X) @ W)
        worst_graph = max(worst_graph, abs(double - trace))

        B = rng.normal(size=(d, d))
        S_b = B @ B.T + np.eye(d)
        Q = rng.normal(size=(d, d))
        S_w = Q @ Q.T + 0.1 * np.eye(d)
        gamma = float(rng.uniform(0, 0.2))
        XLX = g.quadratic_form(X) / N
        k = int(rng.integers(1, d + 1))
        try:
            V, lam = wl.solve_projection(S_w, S_b, XLX, gamma, k, 1e-6, return_values=True)
        except ValueError:
            continue
        Mx = np.linalg.inv(S_b - gamma * XLX + 1e-6 * np.eye(d)) @ S_w
        for j in range(k):
            worst_res = max(worst_res, float(np.linalg.norm(Mx @ V[:, j] - lam[j] * V[:, j])))
    ok = worst_res <= 1e-8 and worst_graph <= 1e-8 and worst_scatter <= 1e-10
    return CheckResult("w-LPPD eigen residual, graph identity, scatter oracle", ok,
                       f"residual {worst_res:.1e}, double-sum vs 2 trace {worst_graph:.1e}, "
                       f"scatter vs LDA {worst_scatter:.1e}")


def _kkt_audit(alpha, y, f, C, tol):
    # independent restatement: per-point margin conditions from the dual solution
    bad = 0
    for a, yi, fi in zip(alpha, y, f):
        m = yi * fi
        if a <= 1e-12 and m < 1 - tol:
            bad += 1
        elif a >= C - 1e-12 and m > 1 + tol:
            bad += 1
        elif 1e-12 < a < C - 1e-12 and abs(m - 1) > tol:
            bad += 1
    return bad


def check_svm(n_cases: int = 12, seed: int = 4, tol: float = 1e-3) -> CheckResult:
    rng = np.random.default_rng(seed)
    models = bad = 0
    for t in range(n_cases):
        N = int(rng.integers(10, 60))
        X = rng.normal(size=(N, 3))
        y = np.where(X[:, 0] + 0.5 * rng.normal(size=N) > 0, 1.0, -1.0)
        y[0], y[1] = 1.0, -1.0
        kernel = svm_mod.KernelSpec("linear") if t % 2 else svm_mod.KernelSpec("rbf", 0.5)
        C = float(rng.choice([0.1, 1.0, 10.0]))
        m = svm_mod.train_binary(X, y, C, kernel)
        alpha = np.zeros(N)
        alpha[m.support] = m.dual_coef * y[m.support]
        K = np.array([[np.dot(a, b) if kernel.kind == "linear"
                       else np.exp(-kernel.gamma * np.sum((a - b) ** 2)) for b in X] for a in X])
        f = K @ (alpha * y) + m.bias
        bad += _kkt_audit(alpha, y, f, C, tol)
        bad += int(abs(np.sum(alpha * y)) > 1e-6) + int(np.any(alpha < -1e-12) or np.any(alpha > C + 1e-12))
        models += 1
    Xm = np.vstack([rng.normal(loc=c, scale=0.5, size=(15, 2)) for c in ([0, 0], [3, 0], [0, 3])])
    ym = np.repeat([1, 2, 3], 15)
    mc = svm_mod.train_multiclass(Xm, ym, 1.0, svm_mod.KernelSpec("rbf", 0.5), 3)
    bad += svm_mod.audit_multiclass(mc, Xm, ym, tol)
    models += len(mc.models)

    Xx = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    yx = np.array([-1.0, -1.0, 1.0, 1.0])
    xor = svm_mod.train_binary(Xx, yx, 10.0, svm_mod.KernelSpec("rbf", 1.0))
    xor_ok = int(np.sum(svm_mod.predict_binary(xor, Xx)[0] == yx))
    bad += len(svm_mod.kkt_violations(xor, Xx, yx, tol))
    models += 1
    return CheckResult("SVM KKT audit and XOR", bad == 0 and xor_ok == 4,
                       f"{bad} violations over {models} binary models (tol {tol:g}); XOR {xor_ok}/4")


def check_vote(n_cases: int = 1000, seed: int = 5) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatch = scale_flips = 0
    for _ in range(n_cases):
        K = int(rng.integers(1, 8))
        C = int(rng.integers(2, 6))
        w = rng.random(K)
        preds = rng.integers(1, C + 1, K)
        brute = [sum(w[k] for k in range(K) if preds[k] == c) for c in range(1, C + 1)]
        best = max(brute)
        label = next(c for c in range(1, C + 1) if brute[c - 1] == best)
        scores = ens.vote_scores(w, preds, C)
        if ens.vote_labels(scores) != label or not np.allclose(scores, brute, atol=1e-12):
            mismatch += 1
        s = float(rng.uniform(0.01, 100))
        if ens.vote_labels(ens.vote_scores(w * s, preds, C)) != label:
            scale_flips += 1
    return CheckResult("ensemble vote vs enumeration", mismatch == 0 and scale_flips == 0,
                       f"{mismatch} mismatches, {scale_flips} scaling flips over {n_cases} cases")


CHECKS = {
    "gradients": check_gradients,
    "embedding": check_embedding,
    "lasso": check_soft_threshold,
    "wlppd": check_wlppd,
    "svm": check_svm,
    "vote": check_vote,
}


def run_all(names=None) -> list:
    return [CHECKS[n]() for n in (names or CHECKS)]
