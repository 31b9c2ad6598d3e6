"""SMO for the soft-margin SVM dual, with an LRU cache of kernel rows.

Dual: min 1/2 a'Qa - e'a  s.t. 0 <= a <= C, y'a = 0, with Q_ij = y_i y_j K_ij.
Working pairs are the maximal violating pair; ties go to the lowest index.
"""
import numpy as np

from ._backend import njit

LINEAR = 0
RBF = 1


@njit
def kernel_row(X, sqn, i, kind, gamma, out):
    dots = np.dot(X, X[i])
    if kind == LINEAR:
        out[:] = dots
    else:
        out[:] = np.exp(-gamma * np.maximum(sqn + sqn[i] - 2.0 * dots, 0.0))


@njit
def _fetch(X, sqn, i, kind, gamma, cache, slot_of, owner, stamp, clock):
    s = slot_of[i]
    if s < 0:
        s = np.argmin(stamp)
        if owner[s] >= 0:
            slot_of[owner[s]] = -1
        owner[s] = i
        slot_of[i] = s
        kernel_row(X, sqn, i, kind, gamma, cache[s])
    stamp[s] = clock
    return s


@njit
def smo_solve(X, y, C, kind, gamma, eps, max_iter, cache_slots):
    """Returns ``(alpha, rho, iterations, converged)``; decision is K a*y - rho."""
    n = X.shape[0]
    sqn = np.sum(X * X, axis=1)
    slots = max(2, min(n, cache_slots))
    cache = np.empty((slots, n))
    slot_of = -np.ones(n, dtype=np.int64)
    owner = -np.ones(slots, dtype=np.int64)
    stamp = -np.ones(slots, dtype=np.int64)
    diag = np.empty(n)
    for t in range(n):
        if kind == LINEAR:
            diag[t] = sqn[t]
        else:
            diag[t] = 1.0

    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    converged = False
    clock = 0
    while it < max_iter:
        score = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        i = np.argmax(np.where(up, score, -np.inf))
        j = np.argmin(np.where(low, score, np.inf))
        if not up[i] or not low[j] or score[i] - score[j] < eps:
            converged = True
            break
        clock += 1
        si = _fetch(X, sqn, i, kind, gamma, cache, slot_of, owner, stamp, clock)
        sj = _fetch(X, sqn, j, kind, gamma, cache, slot_of, owner, stamp, clock)
        Ki = cache[si]
        Kj = cache[sj]
        ai_old = alpha[i]
        aj_old = alpha[j]
        Qij = y[i] * y[j] * Ki[j]
        if y[i] != y[j]:
            quad = diag[i] + diag[j] + 2.0 * Qij
            if quad <= 0:
                quad = 1e-12
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai = ai_old + delta
            aj = aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > C:
                    ai = C
                    aj = C - diff
            else:
                if aj > C:
                    aj = C
                    ai = C + diff
        else:
            quad = diag[i] + diag[j] - 2.0 * Qij
            if quad <= 0:
                quad = 1e-12
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai = ai_old - delta
            aj = aj_old + delta
            if total > C:
                if ai > C:
                    ai = C
                    aj = total - C
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > C:
                if aj > C:
                    aj = C
                    ai = total - C
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i] = ai
        alpha[j] = aj
        dai = ai - ai_old
        daj = aj - aj_old
        # Q row t: y_t * y * K_t
        G += (y[i] * dai) * y * Ki + (y[j] * daj) * y * Kj
        it += 1

    # rho: mean over free vectors, else midpoint of the feasible interval
    yG = y * G
    ub = np.inf
    lb = -np.inf
    total = 0.0
    nfree = 0
    for t in range(n):
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG[t])
            else:
                lb = max(lb, yG[t])
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG[t])
            else:
                lb = max(lb, yG[t])
        else:
            nfree += 1
            total += yG[t]
    if nfree > 0:
        rho = total / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, rho, it, converged
