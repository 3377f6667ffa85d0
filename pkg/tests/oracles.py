"""Independent reference computations used only by the tests.

Nothing here imports the package's solvers; each oracle takes a different
route to the same number (generic LP, quadrature, dense grids, loops).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize


def lp_minse(sizes, b, gamma, tau):
    """Solve min <p, sizes> s.t. p in simplex, p_i <= gamma b_i + s_i, s >= 0, sum s <= tau.

    Variables are (p_1..p_K, s_1..s_K).  Returns (objective, p).
    """
    sizes = np.asarray(sizes, dtype=float)
    b = np.asarray(b, dtype=float)
    K = sizes.size
    c = np.concatenate([sizes, np.zeros(K)])
    A_ub = np.zeros((K + 1, 2 * K))
    A_ub[:K, :K] = np.eye(K)
    A_ub[:K, K:] = -np.eye(K)
    A_ub[K, K:] = 1.0
    b_ub = np.concatenate([gamma * b, [tau]])
    A_eq = np.concatenate([np.ones(K), np.zeros(K)])[None, :]
    res = optimize.linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=[(0, None)] * (2 * K), method="highs"
    )
    assert res.status == 0, res.message
    return float(res.fun), res.x[:K]


def lp_ada_minse_grid(sizes, b, alpha, alpha_prime, n_grid=2001):
    """Minimise the MinSE LP objective over a fine grid of gamma in [1, alpha/alpha']."""
    best = math.inf
    best_gamma = None
    for g in np.linspace(1.0, alpha / alpha_prime, n_grid):
        tau = max(0.0, alpha - g * alpha_prime)
        val, _ = lp_minse(sizes, b, g, tau)
        if val < best - 1e-12:
            best, best_gamma = val, g
    return best, best_gamma


def laplace_argmin_probs(sizes, eta):
    """P(i = argmin_j sizes_j + eps_j), eps iid Laplace(0, 1/eta), by 1-D quadrature.

    P(i) = int f(t - a_i) prod_{j != i} (1 - F(t - a_j)) dt.
    """
    a = np.asarray(sizes, dtype=float)

    def pdf(z):
        return 0.5 * eta * math.exp(-eta * abs(z))

    def sf(z):  # P(eps > z)
        return 0.5 * math.exp(-eta * z) if z >= 0 else 1 - 0.5 * math.exp(eta * z)

    out = []
    lo, hi = a.min() - 60 / eta, a.max() + 60 / eta
    breaks = sorted(set(a.tolist()))
    for i in range(a.size):
        def integrand(t, i=i):
            v = pdf(t - a[i])
            for j in range(a.size):
                if j != i:
                    v *= sf(t - a[j])
            return v

        val, _ = integrate.quad(integrand, lo, hi, points=breaks, limit=400, epsabs=1e-13, epsrel=1e-12)
        out.append(val)
    return np.array(out)


def softmax_formula(sizes, eta, scale=1.0):
    w = [math.exp(-eta * s / scale) for s in sizes]
    tot = sum(w)
    return np.array([v / tot for v in w])


def grid_majority(intervals_per_set, weights, grid, threshold=0.5):
    """Membership of each grid point in {y : sum_i w_i 1{y in C_i} >= threshold}."""
    vote = np.zeros_like(grid)
    for w, ivs in zip(weights, intervals_per_set):
        inside = np.zeros(grid.shape, dtype=bool)
        for lo, hi in ivs:
            inside |= (grid >= lo) & (grid <= hi)
        vote += w * inside
    return vote >= threshold - 1e-12


def brute_ranks(cal_scores_per_model, chosen):
    """R_i = #{j : s_{k_i, j} <= s_{k_i, i}} by a double loop."""
    m = len(chosen)
    out = []
    for i in range(m):
        s = cal_scores_per_model[chosen[i]]
        out.append(sum(1 for j in range(m) if s[j] <= s[i]))
    return np.array(out)


def hedge_weights(loss_rows, eta):
    """Fixed-rate exponential weights after the given loss rows."""
    L = np.sum(np.asarray(loss_rows, dtype=float), axis=0)
    w = np.array([math.exp(-eta * v) for v in L])
    return w / w.sum()


def adahedge_weights(loss_rows, K):
    """AdaHedge (de Rooij et al.): eta_t = ln K / Delta_{t-1}, Delta summing mixability gaps."""
    L = np.zeros(K)
    delta = 0.0
    w = np.full(K, 1.0 / K)
    for row in loss_rows:
        row = np.asarray(row, dtype=float)
        eta = math.log(K) / delta if delta > 0 else math.inf
        h = float(w @ row)
        if eta == math.inf:
            mix = float(row[w > 0].min())
        else:
            mix = -math.log(float(w @ np.exp(-eta * row))) / eta
        delta += max(0.0, h - mix)
        L = L + row
        if delta > 0:
            eta = math.log(K) / delta
            z = np.exp(-eta * (L - L.min()))
            w = z / z.sum()
    return w


def lag1_autocorrelation(y):
    y = np.asarray(y, dtype=float) - np.mean(y)
    return float((y[1:] * y[:-1]).sum() / (y * y).sum())
