"""Weighted CART classification trees (Gini impurity).

Trees are stored flat in preorder. Node ``i`` is a leaf when
``feature[i] == -1``; otherwise rows with ``x[feature] <= threshold`` go to
``left[i]`` and the rest to ``right[i]``. Every node keeps its weighted
class counts, and a leaf predicts the argmax (lowest class on ties).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# relative slack under which two impurity decreases count as equal
TIE_RTOL = 1e-12


@dataclass(eq=False)
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_classes(self) -> int:
        return self.counts.shape[1]

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_index(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.counts[self.leaf_index(X)], axis=1)

    def __eq__(self, other):
        if not isinstance(other, DecisionTree):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("feature", "threshold", "left", "right", "counts")
        )


@njit(cache=True)
def _split_scores(X, y, w, order, in_node, n_node, feats, n_classes):
    """Score every candidate split of one node.

    ``order[f]`` lists all rows sorted by feature ``f``; rows outside the
    node are skipped via ``in_node``. Entry ``[j, p]`` describes the boundary
    after the node's ``p+1`` smallest values of ``feats[j]``: its score
    ``sum_c L_c^2 / W_L + sum_c R_c^2 / W_R`` (``-inf`` where equal values
    or an empty side make the split impossible) and the values either side.
    Larger scores mean larger weighted Gini decreases.
    """
    m = feats.size
    total = np.zeros(n_classes)
    for r in range(in_node.size):
        if in_node[r]:
            total[y[r]] += w[r]
    w_tot = total.sum()
    width = max(n_node - 1, 0)
    scores = np.full((m, width), -np.inf)
    lo = np.zeros((m, width))
    hi = np.zeros((m, width))
    left = np.empty(n_classes)
    for j in range(m):
        f = feats[j]
        left[:] = 0.0
        w_l = 0.0
        p = -1
        prev = 0.0
        for r in order[f]:
            if not in_node[r]:
                continue
            v = X[r, f]
            if p >= 0:
                lo[j, p] = prev
                hi[j, p] = v
                w_r = w_tot - w_l
                if v > prev and w_l > 0.0 and w_r > 0.0:
                    sl = 0.0
                    sr = 0.0
                    for c in range(n_classes):
                        sl += left[c] * left[c]
                        rc = total[c] - left[c]
                        sr += rc * rc
                    scores[j, p] = sl / w_l + sr / w_r
            left[y[r]] += w[r]
            w_l += w[r]
            prev = v
            p += 1
    return scores, lo, hi, total


def presort(X: np.ndarray) -> np.ndarray:
    """Row order of every column, shaped (features, rows)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def best_split(X, y, w, idx, features, n_classes, order=None):
    """Best Gini split of the rows ``idx`` over the candidate ``features``.

    Returns ``(feature, threshold, decrease)`` or ``None`` when no candidate
    feature takes two distinct values. Thresholds are midpoints between
    consecutive distinct values. Scores within a relative ``TIE_RTOL`` of the
    best count as tied; ties go to the lowest feature, then the lowest
    threshold.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=np.float64)
    idx = np.asarray(idx, dtype=np.int64)
    features = np.asarray(features, dtype=np.int64)
    if idx.size < 2 or features.size == 0:
        return None
    if order is None:
        order = presort(X)
    in_node = np.zeros(X.shape[0], dtype=np.bool_)
    in_node[idx] = True
    scores, lo, hi, total = _split_scores(X, y, w, order, in_node, idx.size, features, n_classes)
    flat = scores.ravel()  # feature-major, so the first hit honours the tie rule
    best = flat.max()
    if not np.isfinite(best):
        return None
    k = int(np.flatnonzero(flat >= best - TIE_RTOL * abs(best))[0])
    j, i = divmod(k, idx.size - 1)
    w_tot = total.sum()
    decrease = (best - (total**2).sum() / w_tot) / w_tot
    threshold = 0.5 * (lo[j, i] + hi[j, i])
    if threshold >= hi[j, i]:  # midpoint rounded onto the upper value
        threshold = lo[j, i]
    return int(features[j]), float(threshold), float(decrease)


def gini(counts: np.ndarray) -> float:
    w = counts.sum()
    return 0.0 if w <= 0 else 1.0 - float(((counts / w) ** 2).sum())


def tree_fit(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    weights: np.ndarray | None = None,
    mtry: int | None = None,
    min_node: int = 1,
    max_depth: int | None = None,
    rng: np.random.Generator | None = None,
    order: np.ndarray | None = None,
) -> DecisionTree:
    """Grow a tree greedily.

    A node becomes a leaf when it is pure, holds ``min_node`` rows or fewer,
    sits at ``max_depth``, or no split lowers the impurity. At each node
    ``mtry`` features are drawn without replacement from ``rng``. ``order``
    may carry a precomputed :func:`presort` of ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative, one per row, and not all zero")
    mtry = d if mtry is None else int(mtry)
    if not 1 <= mtry <= d:
        raise ValueError(f"mtry must lie in 1..{d}, got {mtry}")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in 0..{n_classes - 1}")
    rng = np.random.default_rng(0) if rng is None else rng
    X = np.ascontiguousarray(X)
    order = presort(X) if order is None else order
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = w

    feature, threshold, left, right, counts = [], [], [], [], []

    def grow(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        node_counts = onehot[idx].sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(node_counts)
        if (
            idx.size <= min_node
            or np.count_nonzero(node_counts) <= 1
            or (max_depth is not None and depth >= max_depth)
        ):
            return node
        feats = np.arange(d) if mtry == d else np.sort(rng.choice(d, size=mtry, replace=False))
        split = best_split(X, y, w, idx, feats, n_classes, order)
        if split is None or split[2] <= TIE_RTOL:
            return node
        f, t, _ = split
        go_left = X[idx, f] <= t
        feature[node], threshold[node] = f, t
        left[node] = grow(idx[go_left], depth + 1)
        right[node] = grow(idx[~go_left], depth + 1)
        return node

    grow(np.arange(n), 0)
    return DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(counts, dtype=np.float64).reshape(-1, n_classes),
    )


def tree_to_lines(tree: DecisionTree) -> list[str]:
    """Preorder node list: ``split f t`` or ``leaf c0 c1 ...``."""
    g = lambda v: format(float(v), ".17g")  # noqa: E731
    out = []
    for i in range(tree.n_nodes):
        if tree.feature[i] >= 0:
            out.append(f"split {tree.feature[i]} {g(tree.threshold[i])} " + " ".join(g(c) for c in tree.counts[i]))
        else:
            out.append("leaf " + " ".join(g(c) for c in tree.counts[i]))
    return out


def tree_from_lines(lines: list[str], n_classes: int) -> tuple[DecisionTree, int]:
    """Rebuild a tree from preorder lines; returns it and the lines consumed."""
    feature, threshold, counts = [], [], []
    left, right = [], []
    pos = 0

    def read() -> int:
        nonlocal pos
        parts = lines[pos].split()
        pos += 1
        node = len(feature)
        left.append(-1)
        right.append(-1)
        if parts[0] == "split":
            feature.append(int(parts[1]))
            threshold.append(float(parts[2]))
            counts.append([float(c) for c in parts[3:]])
            left[node] = read()
            right[node] = read()
        elif parts[0] == "leaf":
            feature.append(-1)
            threshold.append(0.0)
            counts.append([float(c) for c in parts[1:]])
        else:
            raise ValueError(f"bad tree node line {lines[pos - 1]!r}")
        return node

    read()
    tree = DecisionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(counts, dtype=np.float64).reshape(-1, n_classes),
    )
    return tree, pos
