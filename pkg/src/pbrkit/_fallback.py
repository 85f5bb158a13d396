"""Pure numpy implementations of the hot kernels.

These define the reference semantics; ``_speedups.pyx`` must agree with
them to floating-point round-off. Inputs are assumed validated by the
callers in the public modules.
"""
from __future__ import annotations

import numpy as np


def gini_sorted(y):
    n = y.shape[0]
    s = y.sum()
    if n == 0 or s == 0.0:
        return np.nan
    if y[0] == y[-1]:
        return 0.0  # constant vector; avoid round-off residue
    coef = 2.0 * np.arange(1, n + 1) - n - 1
    return float(coef @ y / (n * s))


def gini(x):
    return gini_sorted(np.sort(np.asarray(x, dtype=np.float64)))


def gini_rows(x):
    x = np.sort(np.asarray(x, dtype=np.float64), axis=1)
    n = x.shape[1]
    coef = 2.0 * np.arange(1, n + 1) - n - 1
    s = x.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (x @ coef) / (n * s)
    out[(x[:, 0] == x[:, -1]) & (s != 0)] = 0.0
    return out


def weighted_gini(x, w):
    """Mean-difference Gini with frequency weights, O(n log n)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    total_w = ws.sum()
    mass = (ws * xs).sum()
    if total_w == 0.0 or mass == 0.0:
        return np.nan
    cum = np.cumsum(ws)
    below = cum - ws
    above = total_w - cum
    # sum_{i,j} w_i w_j |x_i - x_j| = 2 sum_i w_i x_i (W_below - W_above)
    return float((ws * xs * (below - above)).sum() / (total_w * mass))


def leave_one_out_gini(x):
    """Gini of ``x`` with each element removed in turn (original order)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    y = x[order]
    total = y.sum()
    k = np.arange(1, n + 1)
    numer = ((2.0 * k - n - 1) * y).sum()
    prefix = np.cumsum(y)
    before = prefix - y
    after = total - prefix
    new_numer = numer - (2.0 * k - n - 1) * y + before - after
    new_sum = total - y
    with np.errstate(invalid="ignore", divide="ignore"):
        g_sorted = new_numer / ((n - 1) * new_sum)
    out = np.empty(n)
    out[order] = g_sorted
    return out


def theil(x):
    x = np.asarray(x, dtype=np.float64)
    r = x / x.mean()
    return float(np.mean(r * np.log(r)))


def _aligned_gini_one(values, dev, target, ks):
    order = np.argsort(-dev, kind="stable")
    out = np.empty(len(ks))
    for j, k in enumerate(ks):
        adj = values.copy()
        adj[order[:k]] = target
        out[j] = gini(adj)
    return out


def aligned_gini(values, dev, target, ks):
    """Gini after replacing the ``k`` highest-``dev`` entries by ``target``.

    Ties in ``dev`` are broken by position (earlier first).
    """
    values = np.asarray(values, dtype=np.float64)
    dev = np.asarray(dev, dtype=np.float64)
    return _aligned_gini_one(values, dev, float(target), np.asarray(ks, dtype=np.int64))


def bootstrap_alignment(values, dev, idx, target, ks):
    """Paired baseline/adjusted Gini for each resample row of ``idx``."""
    values = np.asarray(values, dtype=np.float64)
    dev = np.asarray(dev, dtype=np.float64)
    idx = np.asarray(idx, dtype=np.int64)
    ks = np.asarray(ks, dtype=np.int64)
    n_rep = idx.shape[0]
    base = np.empty(n_rep)
    adj = np.empty((n_rep, len(ks)))
    for r in range(n_rep):
        v = values[idx[r]]
        base[r] = gini(v)
        adj[r] = _aligned_gini_one(v, dev[idx[r]], float(target), ks)
    return base, adj


def permutation_mean_diff(pooled, n_a, perms):
    """mean(a) - mean(b) for every permutation row of indices into ``pooled``."""
    pooled = np.asarray(pooled, dtype=np.float64)
    perms = np.asarray(perms, dtype=np.int64)
    shuffled = pooled[perms]
    n_b = pooled.shape[0] - n_a
    return shuffled[:, :n_a].sum(axis=1) / n_a - shuffled[:, n_a:].sum(axis=1) / n_b


def resample_cis(values, idx, mask):
    """Leave-unit-out CIS on each resample row of ``idx``; NaN when the unit is absent."""
    values = np.asarray(values, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    idx = np.asarray(idx, dtype=np.int64)
    out = np.empty(idx.shape[0])
    for r in range(idx.shape[0]):
        v, m = values[idx[r]], mask[idx[r]]
        if not m.any():
            out[r] = np.nan
            continue
        g_all = gini(v)
        g_minus = gini(v[~m]) if (~m).any() else np.nan
        if np.isnan(g_all) or np.isnan(g_minus):
            out[r] = np.nan
        elif g_all == 0.0:
            out[r] = 0.0
        else:
            out[r] = 100.0 * ((g_all - g_minus) / g_all)
    return out
