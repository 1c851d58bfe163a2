"""Independent reference implementations used as test oracles.

These are deliberately naive: plain Python loops straight from the textbook
definitions, sharing no code with the package.
"""

import itertools
import math

import numpy as np


def brute_knn(queries, reference, k, exclude=None):
    """k nearest reference rows per query by full sort; ties by lower index."""
    out_idx, out_dist = [], []
    for qi, q in enumerate(queries):
        cands = []
        for ri, r in enumerate(reference):
            if exclude is not None and exclude[qi] == ri:
                continue
            cands.append((math.dist(q, r), ri))
        cands.sort()
        out_idx.append([ri for _, ri in cands[:k]])
        out_dist.append([dd for dd, _ in cands[:k]])
    return np.array(out_idx), np.array(out_dist)


def _neighbors(X, i, k):
    """Indices of the k nearest other points of X[i] (continuous data, no ties)."""
    d = sorted((math.dist(X[i], X[j]), j) for j in range(len(X)) if j != i)
    return [j for _, j in d[:k]], [dd for dd, _ in d[:k]]


def textbook_avgknn(X, k):
    return np.array([sum(_neighbors(X, i, k)[1]) / k for i in range(len(X))])


def textbook_lof(X, k):
    """LOF(p) = mean over o in N_k(p) of lrd(o) / lrd(p).

    reach-dist_k(p, o) = max(k-distance(o), d(p, o)),
    lrd(p) = 1 / mean over o in N_k(p) of reach-dist_k(p, o).
    """
    n = len(X)
    nbrs = [_neighbors(X, i, k)[0] for i in range(n)]
    kdist = [_neighbors(X, i, k)[1][-1] for i in range(n)]

    def lrd(p):
        reach = [max(kdist[o], math.dist(X[p], X[o])) for o in nbrs[p]]
        return 1.0 / (sum(reach) / k)

    lrds = [lrd(p) for p in range(n)]
    return np.array([sum(lrds[o] for o in nbrs[p]) / k / lrds[p] for p in range(n)])


def _g(x):
    """Per-set cost e^2 + max(0, e - 0.5); +inf outside [0, 1]."""
    x = np.asarray(x, dtype=np.float64)
    val = x * x + np.maximum(0.0, x - 0.5)
    return np.where((x >= -1e-12) & (x <= 1 + 1e-12), val, np.inf)


def grid_qp(rates, step=1e-3):
    """Grid minimum of the error-estimation objective for b = 2 or 3.

    Individual errors range over a grid of the given step on [0, 1]; the
    pairwise errors follow from ``a_ij = 1 - e_i - e_j + 2 e_ij``.

    Returns:
        (minimum objective, minimizing individual errors)
    """
    a = np.asarray(rates, dtype=np.float64)
    b = a.shape[0]
    grid = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)

    def pair(i, j, ei, ej):
        return _g((a[i, j] - 1 + ei + ej) / 2)

    if b == 2:
        E1, E2 = np.meshgrid(grid, grid, indexing="ij")
        F = _g(E1) + _g(E2) + pair(0, 1, E1, E2)
        idx = np.unravel_index(np.argmin(F), F.shape)
        return float(F[idx]), np.array([grid[idx[0]], grid[idx[1]]])
    if b == 3:
        E1, E2 = np.meshgrid(grid, grid, indexing="ij")
        base = _g(E1) + _g(E2) + pair(0, 1, E1, E2)
        best, arg = np.inf, None
        for e3 in grid:
            F = base + _g(e3) + pair(0, 2, grid, e3)[:, None] + pair(1, 2, grid, e3)[None, :]
            m = np.argmin(F)
            if F.flat[m] < best:
                i, j = np.unravel_index(m, F.shape)
                best, arg = float(F.flat[m]), np.array([grid[i], grid[j], e3])
        return best, arg
    raise ValueError("grid oracle supports b = 2 or 3")


def qp_objective(individual, rates):
    e = np.asarray(individual, dtype=np.float64)
    a = np.asarray(rates, dtype=np.float64)
    total = float(np.sum(e * e + np.maximum(0.0, e - 0.5)))
    for i, j in itertools.combinations(range(len(e)), 2):
        eij = (a[i, j] - 1 + e[i] + e[j]) / 2
        total += eij * eij + max(0.0, eij - 0.5)
    return total


def random_feasible_rates(b, rng, return_errors=False):
    """Agreement matrix generated from consistent individual and joint errors."""
    e = rng.random(b)
    a = np.eye(b)
    for i, j in itertools.combinations(range(b), 2):
        lo, hi = max(0.0, e[i] + e[j] - 1), min(e[i], e[j])
        eij = rng.uniform(lo, hi)
        a[i, j] = a[j, i] = 1 - e[i] - e[j] + 2 * eij
    return (a, e) if return_errors else a


def successive_sampling_pair_probs(w):
    """Exact probability of each unordered pair under weighted draws without replacement."""
    w = np.asarray(w, dtype=np.float64)
    W = w.sum()
    probs = {}
    for i, j in itertools.combinations(range(len(w)), 2):
        probs[(i, j)] = w[i] / W * w[j] / (W - w[i]) + w[j] / W * w[i] / (W - w[j])
    return probs


def step_ccdf_area(values, grid_points=200001):
    """Riemann approximation of the area under P(A > t) on [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    t = np.linspace(0, 1, grid_points)
    surv = (v[None, :] > t[:, None]).mean(axis=1)
    return float(surv[:-1].mean())
