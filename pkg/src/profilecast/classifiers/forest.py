"""Random forests: bagged CART trees with per-node feature subsampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tree import DecisionTree, tree_fit


@dataclass(eq=False)
class ForestModel:
    trees: list[DecisionTree]
    n_classes: int
    n_features: int
    mtry: int
    min_node: int = 5
    seed: int = 0
    oob_indices: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def default_mtry(n_features: int) -> int:
    return max(1, math.isqrt(n_features))


def forest_fit(
    X,
    y,
    n_classes: int,
    n_trees: int = 500,
    mtry: int | None = None,
    min_node: int = 5,
    seed: int = 0,
    bootstrap: bool = True,
) -> ForestModel:
    """Grow ``n_trees`` trees, each on its own size-N bootstrap resample.

    Tree ``b`` draws its resample and its per-node feature subsets from the
    ``b``-th child of ``SeedSequence(seed)``. ``bootstrap=False`` trains every
    tree on the data as given.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    mtry = default_mtry(d) if mtry is None else int(mtry)
    if not 1 <= mtry <= d:
        raise ValueError(f"mtry must lie in 1..{d}, got {mtry}")
    trees, oob = [], []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        if bootstrap:
            idx = rng.integers(0, n, size=n)
            in_bag = np.zeros(n, dtype=bool)
            in_bag[idx] = True
            oob.append(np.flatnonzero(~in_bag))
        else:
            idx = np.arange(n)
            oob.append(np.empty(0, dtype=np.int64))
        trees.append(tree_fit(X[idx], y[idx], n_classes, mtry=mtry, min_node=min_node, rng=rng))
    return ForestModel(trees, n_classes, d, mtry, min_node, seed, oob)


def forest_votes(model: ForestModel, X) -> np.ndarray:
    """Vote counts (rows x classes); each tree casts one vote."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    votes = np.zeros((X.shape[0], model.n_classes))
    rows = np.arange(X.shape[0])
    for tree in model.trees:
        votes[rows, tree.predict(X)] += 1.0
    return votes


def forest_predict(model: ForestModel, X) -> tuple[np.ndarray, np.ndarray]:
    votes = forest_votes(model, X)
    return np.argmax(votes, axis=1), votes / model.n_trees


def oob_error(model: ForestModel, X, y) -> float:
    """Misclassification rate of out-of-bag majority votes.

    Rows that were in every bootstrap sample are skipped.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    votes = np.zeros((X.shape[0], model.n_classes))
    for tree, oob in zip(model.trees, model.oob_indices):
        if oob.size:
            votes[oob, tree.predict(X[oob])] += 1.0
    seen = votes.sum(axis=1) > 0
    if not seen.any():
        return float("nan")
    return float(np.mean(np.argmax(votes[seen], axis=1) != y[seen]))
