"""Independent reference implementations used to verify the hand-built
numerics. Nothing in here imports the solver code it checks; everything is
a direct transcription of a definition, favoring obviousness over speed.
"""

from __future__ import annotations

import numpy as np


# --------------------------------------------------------------------------
# capped-simplex QP (the one-class SVM dual)


def project_capped_simplex(v: np.ndarray, cap: float) -> np.ndarray:
    """Euclidean projection onto {x : 0 <= x_i <= cap, sum x = 1}.

    clip(v - tau, 0, cap) sums monotonically down in tau; bisect tau.
    """
    v = np.asarray(v, dtype=np.float64)
    if cap * len(v) < 1.0 - 1e-12:
        raise ValueError("infeasible: cap * n < 1")
    lo = float(v.min()) - cap - 1.0
    hi = float(v.max()) + 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if np.clip(v - mid, 0.0, cap).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi), 0.0, cap)


def qp_ocsvm_oracle(K: np.ndarray, nu: float,
                    max_iters: int = 40_000) -> tuple[np.ndarray, float]:
    """Dense solve of min 1/2 a^T K a  s.t.  0 <= a <= 1/(nu n), sum a = 1.

    Accelerated projected gradient localizes the active set; every few
    hundred iterations the stationarity system on the current free set is
    solved exactly and the candidate is accepted once its KKT conditions
    certify. Returns (alpha, rho).
    """
    K = np.asarray(K, dtype=np.float64)
    n = len(K)
    cap = 1.0 / (nu * n)
    step = 1.0 / max(float(np.linalg.eigvalsh(K)[-1]), 1e-12)

    a = project_capped_simplex(np.full(n, 1.0 / n), cap)
    y = a.copy()
    t = 1.0
    done = 0
    while done < max_iters:
        for _ in range(250):
            a_new = project_capped_simplex(y - step * (K @ y), cap)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = a_new + ((t - 1.0) / t_new) * (a_new - a)
            a, t = a_new, t_new
        done += 250
        polished = _polish_active_set(K, a, cap)
        if polished is not None:
            return polished
    raise RuntimeError("oracle failed to certify a KKT point")


def _polish_active_set(K: np.ndarray, a: np.ndarray, cap: float,
                       set_tol: float = 1e-6, kkt_tol: float = 1e-9):
    """Exact solve on the active-set guess; None if KKT does not certify."""
    n = len(a)
    at_zero = a <= set_tol
    at_cap = a >= cap - set_tol
    free = ~(at_zero | at_cap)
    x = np.where(at_cap, cap, 0.0)
    m = int(free.sum())
    if m > 0:
        # free-set stationarity: K_FF a_F - rho 1 = -K_FU cap 1, sum a_F known
        A = np.zeros((m + 1, m + 1))
        A[:m, :m] = K[np.ix_(free, free)]
        A[:m, m] = -1.0
        A[m, :m] = 1.0
        rhs = np.concatenate([-K[np.ix_(free, at_cap)].sum(axis=1) * cap,
                              [1.0 - cap * at_cap.sum()]])
        try:
            sol = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            return None
        x[free] = sol[:m]
        rho = float(sol[m])
        if np.any(x[free] < -kkt_tol) or np.any(x[free] > cap + kkt_tol):
            return None
        x[free] = np.clip(x[free], 0.0, cap)
    else:
        g_all = K @ x
        rho = 0.5 * (float(g_all[at_cap].max()) + (float(g_all[at_zero].min())
                                                   if at_zero.any()
                                                   else float(g_all.max())))
    if abs(x.sum() - 1.0) > 1e-9:
        return None
    g = K @ x
    if at_zero.any() and g[at_zero].min() < rho - 1e-7:
        return None
    if at_cap.any() and g[at_cap].max() > rho + 1e-7:
        return None
    return x, rho


def rbf_oracle(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    """Direct double-loop RBF kernel."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    out = np.empty((len(X), len(Y)))
    for i in range(len(X)):
        for j in range(len(Y)):
            d = X[i] - Y[j]
            out[i, j] = np.exp(-gamma * float(d @ d))
    return out


# --------------------------------------------------------------------------
# pairwise AUC statistic


def pairwise_auc(labels, scores) -> float:
    """P(anomaly scores below normal) + half the ties, over all pairs.

    Lower score = more anomalous, label 1 = anomaly. O(n^2) on purpose.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("need both classes")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p < q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


# --------------------------------------------------------------------------
# local outlier factor, textbook transcription


def naive_lof(points: np.ndarray, k: int, floor: float = 1e-12) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    n = len(X)
    if n <= k:
        raise ValueError("need more points than k")
    D = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    D = np.maximum(D, floor)
    np.fill_diagonal(D, np.inf)
    kdist = np.sort(D, axis=1)[:, k - 1]
    neigh = [np.where(D[i] <= kdist[i])[0] for i in range(n)]
    lrd = np.empty(n)
    for i in range(n):
        reach = [max(kdist[j], D[i, j]) for j in neigh[i]]
        lrd[i] = len(neigh[i]) / sum(reach)
    out = np.empty(n)
    for i in range(n):
        out[i] = np.mean([lrd[j] for j in neigh[i]]) / lrd[i]
    return out


# --------------------------------------------------------------------------
# trailing-window band statistics, loop form


def sma_bands_oracle(x: np.ndarray, window: int, width: float):
    """Mean/std of the previous `window` values, flag outside mean +- width*std."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    mean = np.full(n, np.nan)
    std = np.full(n, np.nan)
    flags = np.zeros(n, dtype=np.int64)
    for i in range(window, n):
        past = x[i - window: i]
        mean[i] = past.mean()
        std[i] = past.std()
        if x[i] > mean[i] + width * std[i] or x[i] < mean[i] - width * std[i]:
            flags[i] = 1
    return mean, std, flags


def persistence_mse(windows: np.ndarray, targets: np.ndarray) -> float:
    """MSE of the no-model predictor 'next value = current value'."""
    diff = targets - windows[:, -1, :]
    return float(np.mean(diff * diff))
