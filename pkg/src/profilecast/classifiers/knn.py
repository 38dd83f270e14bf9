"""K-nearest-neighbour classification by averaged one-hot labels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(eq=False)
class KnnModel:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    k: int = 5

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if not 1 <= self.k <= self.X.shape[0]:
            raise ValueError(f"k must lie in 1..{self.X.shape[0]}, got {self.k}")


def knn_fit(X, y, n_classes: int, k: int = 5) -> KnnModel:
    return KnnModel(X, y, n_classes, k)


def knn_scores(model: KnnModel, X) -> np.ndarray:
    """Per-class share of the ``k`` nearest training rows (Euclidean).

    Equal distances are resolved toward the lower training row index.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.X.shape[1]:
        raise ValueError(f"expected {model.X.shape[1]} features, got {X.shape[1]}")
    # direct differences: equal distances compare equal, so the row-order tie rule holds
    d2 = np.empty((X.shape[0], model.X.shape[0]))
    step = max(1, 2_000_000 // max(1, model.X.size))
    for lo in range(0, X.shape[0], step):
        diff = X[lo : lo + step, None, :] - model.X[None, :, :]
        d2[lo : lo + step] = np.einsum("ijk,ijk->ij", diff, diff)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, : model.k]
    scores = np.zeros((X.shape[0], model.n_classes))
    np.add.at(scores, (np.repeat(np.arange(X.shape[0]), model.k), model.y[nearest].ravel()), 1.0)
    return scores / model.k


def knn_predict(model: KnnModel, X) -> tuple[np.ndarray, np.ndarray]:
    scores = knn_scores(model, X)
    return np.argmax(scores, axis=1), scores
