"""Slow, obviously-correct reference computations used by the tests.

Nothing here imports the package under test.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def kappa_exact(cm) -> tuple[Fraction, Fraction]:
    """(accuracy, kappa) as exact fractions from integer counts."""
    rows = [[int(v) for v in r] for r in cm]
    h = len(rows)
    total = sum(map(sum, rows))
    p_o = Fraction(sum(rows[i][i] for i in range(h)), total)
    row_sums = [sum(r) for r in rows]
    col_sums = [sum(rows[i][j] for i in range(h)) for j in range(h)]
    p_e = Fraction(sum(row_sums[c] * col_sums[c] for c in range(h)), total * total)
    if p_e == 1:
        return p_o, Fraction(1 if p_o == 1 else 0)
    return p_o, (p_o - p_e) / (1 - p_e)


def gini_of(counts) -> float:
    w = sum(counts)
    return 1.0 - sum((c / w) ** 2 for c in counts) if w else 0.0


def brute_force_split(X, y, w, n_classes):
    """Exhaustive search over every feature and every midpoint threshold.

    Returns (feature, threshold, decrease) maximising the weighted Gini
    decrease; ties (within a relative 1e-12) go to the lowest feature, then
    the lowest threshold. Decrease is measured as parent impurity minus the
    weight-averaged child impurities.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    total = [sum(w[i] for i in range(n) if y[i] == c) for c in range(n_classes)]
    W = sum(total)
    parent = gini_of(total)
    cands = []
    for f in range(d):
        values = sorted(set(X[:, f]))
        for a, b in zip(values, values[1:]):
            t = (a + b) / 2.0
            left = [0.0] * n_classes
            right = [0.0] * n_classes
            for i in range(n):
                (left if X[i, f] <= t else right)[y[i]] += w[i]
            wl, wr = sum(left), sum(right)
            if wl <= 0 or wr <= 0:
                continue
            dec = parent - (wl / W) * gini_of(left) - (wr / W) * gini_of(right)
            cands.append((f, t, dec))
    if not cands:
        return None
    best = max(c[2] for c in cands)
    tied = [c for c in cands if c[2] >= best - 1e-12 * max(abs(best), 1e-300)]
    return min(tied, key=lambda c: (c[0], c[1]))


def _grid_loglik(x, m1, m2, sd, w):
    """Two-component, shared-variance 1-D mixture log-likelihood on a 4-D grid."""
    x = x[None, None, None, None, :]
    m1 = m1[:, None, None, None, None]
    m2 = m2[None, :, None, None, None]
    var = (sd**2)[None, None, :, None, None]
    w = w[None, None, None, :, None]
    a = np.log(w) - 0.5 * (np.log(2 * np.pi * var) + (x - m1) ** 2 / var)
    b = np.log1p(-w) - 0.5 * (np.log(2 * np.pi * var) + (x - m2) ** 2 / var)
    return np.logaddexp(a, b).sum(axis=-1)


def grid_search_1d(x, n_coarse=31, n_fine=9, rounds=40):
    """Best tied-variance two-component mixture log-likelihood by grid search.

    A coarse grid over (mu1, mu2, sd, w) is followed by repeated zooming: each
    round re-grids a small window around the incumbent with half the step.
    The result is a lower bound on the true maximum that converges to it.
    """
    x = np.asarray(x, dtype=float)
    span = max(float(x.max() - x.min()), 1e-6)
    mus = np.linspace(x.min(), x.max(), n_coarse)
    lsd = np.linspace(np.log(span / 500.0), np.log(span), n_coarse)
    ws = np.linspace(0.02, 0.98, n_coarse)
    grids = [mus, mus, lsd, ws]
    steps = [g[1] - g[0] for g in grids]
    best = -np.inf
    point = None
    for _ in range(rounds + 1):
        ll = _grid_loglik(x, grids[0], grids[1], np.exp(grids[2]), grids[3])
        k = np.unravel_index(int(np.argmax(ll)), ll.shape)
        if ll[k] > best:
            best = float(ll[k])
            point = [g[i] for g, i in zip(grids, k)]
        steps = [s / 2.0 for s in steps]
        grids = [np.linspace(c - s * 2, c + s * 2, n_fine) for c, s in zip(point, steps)]
        grids[3] = np.clip(grids[3], 1e-6, 1 - 1e-6)
    return best


def multinomial_sd(n, p):
    p = np.asarray(p, dtype=float)
    return np.sqrt(n * p * (1 - p))
