"""Multi-class AdaBoost (SAMME) over shallow weighted CART trees.

Every row starts with weight 1/N. Each stage fits a tree to the current
weights, scores it by its weighted error ``e``, and multiplies the weights
of the rows it got wrong by ``exp(gamma)`` with
``gamma = learning_rate * (log((1 - e) / e) + log(H - 1))``.
Prediction is the class with the largest gamma-weighted vote.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoUsefulStage
from .tree import DecisionTree, presort, tree_fit

# error used for gamma when a stage is perfect, keeping gamma finite
PERFECT_STAGE_ERROR = 1e-10


@dataclass(eq=False)
class BoostModel:
    trees: list[DecisionTree]
    alphas: np.ndarray
    n_classes: int
    n_features: int
    learning_rate: float = 0.1
    max_depth: int = 3
    errors: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def n_stages(self) -> int:
        return len(self.trees)

    def truncate(self, n_stages: int) -> "BoostModel":
        """The model after its first ``n_stages`` stages."""
        return BoostModel(
            self.trees[:n_stages], self.alphas[:n_stages], self.n_classes, self.n_features,
            self.learning_rate, self.max_depth, self.errors[:n_stages],
        )


def stage_error(weights: np.ndarray, missed: np.ndarray) -> float:
    """Weighted misclassification rate of one stage."""
    return float(weights[missed].sum() / weights.sum())


def samme_gamma(error: float, n_classes: int, learning_rate: float = 1.0) -> float:
    error = max(error, PERFECT_STAGE_ERROR)
    return learning_rate * (math.log((1.0 - error) / error) + math.log(n_classes - 1))


def reweight(weights: np.ndarray, missed: np.ndarray, gamma: float) -> np.ndarray:
    """Scale misclassified rows by ``exp(gamma)`` and renormalise to sum 1."""
    w = np.where(missed, weights * math.exp(gamma), weights)
    return w / w.sum()


def boost_fit(
    X,
    y,
    n_classes: int,
    n_rounds: int = 200,
    max_depth: int = 3,
    learning_rate: float = 0.1,
    seed: int = 0,
    min_node: int = 1,
    weight_trace: list | None = None,
) -> BoostModel:
    """Fit up to ``n_rounds`` stages.

    A stage whose error reaches ``1 - 1/H`` is discarded and fitting stops;
    a perfect stage is kept and fitting stops. Pass a list as
    ``weight_trace`` to collect the weight vector after every update.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n_classes < 2:
        raise ValueError("boosting needs at least two classes")
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    rng = np.random.default_rng(seed)
    order = presort(X)
    w = np.full(n, 1.0 / n)
    if weight_trace is not None:
        weight_trace.append(w.copy())
    chance = 1.0 - 1.0 / n_classes
    trees, alphas, errors = [], [], []
    for f in range(n_rounds):
        tree = tree_fit(
            X, y, n_classes, weights=w, mtry=d, min_node=min_node, max_depth=max_depth, rng=rng, order=order
        )
        missed = tree.predict(X) != y
        e = stage_error(w, missed)
        if e >= chance:
            if f == 0:
                raise NoUsefulStage(f"first stage error {e:.4f} is no better than chance ({chance:.4f})")
            break
        gamma = samme_gamma(e, n_classes, learning_rate)
        trees.append(tree)
        alphas.append(gamma)
        errors.append(e)
        if e == 0.0:
            break
        w = reweight(w, missed, gamma)
        if weight_trace is not None:
            weight_trace.append(w.copy())
    return BoostModel(trees, np.array(alphas), n_classes, d, learning_rate, max_depth, np.array(errors))


def boost_scores(model: BoostModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    scores = np.zeros((X.shape[0], model.n_classes))
    rows = np.arange(X.shape[0])
    for tree, gamma in zip(model.trees, model.alphas):
        scores[rows, tree.predict(X)] += gamma
    return scores


def boost_predict(model: BoostModel, X) -> tuple[np.ndarray, np.ndarray]:
    scores = boost_scores(model, X)
    return np.argmax(scores, axis=1), scores
