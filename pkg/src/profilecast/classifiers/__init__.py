"""From-scratch classifiers that predict cluster labels from profile rows."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from ..data import LabeledDataset
from .boost import BoostModel, boost_fit, boost_predict
from .forest import ForestModel, default_mtry, forest_fit, forest_predict, oob_error
from .knn import KnnModel, knn_fit, knn_predict
from .tree import DecisionTree, best_split, tree_fit

__all__ = [
    "BoostModel", "DecisionTree", "ForestModel", "KnnModel", "MODELS", "ModelSpec",
    "best_split", "boost_fit", "boost_predict", "default_mtry", "fit_model", "forest_fit",
    "forest_predict", "knn_fit", "knn_predict", "oob_error", "predict", "resolve_mtry", "tree_fit",
]


def resolve_mtry(value, n_features: int) -> int:
    """Accept an int or one of ``sqrt``, ``quarter``, ``half``."""
    named = {
        "sqrt": default_mtry(n_features),
        "quarter": max(1, n_features // 4),
        "half": max(1, n_features // 2),
    }
    if isinstance(value, str):
        if value not in named:
            raise ValueError(f"unknown mtry {value!r}")
        return named[value]
    return min(max(1, int(value)), n_features)


def _fit_knn(data: LabeledDataset, params: Mapping, seed: int) -> KnnModel:
    return knn_fit(data.X, data.y, data.n_classes, k=int(params.get("k", 5)))


def _fit_forest(data: LabeledDataset, params: Mapping, seed: int) -> ForestModel:
    return forest_fit(
        data.X, data.y, data.n_classes,
        n_trees=int(params.get("n_trees", 500)),
        mtry=resolve_mtry(params.get("mtry", "sqrt"), data.X.shape[1]),
        min_node=int(params.get("min_node", 5)),
        seed=seed,
    )


def _fit_boost(data: LabeledDataset, params: Mapping, seed: int) -> BoostModel:
    return boost_fit(
        data.X, data.y, data.n_classes,
        n_rounds=int(params.get("n_rounds", 200)),
        max_depth=int(params.get("max_depth", 3)),
        learning_rate=float(params.get("learning_rate", 0.1)),
        seed=seed,
    )


@dataclass(frozen=True)
class ModelSpec:
    name: str
    fit: Callable[[LabeledDataset, Mapping, int], object]
    predict: Callable[[object, np.ndarray], tuple[np.ndarray, np.ndarray]]
    # grid parameter whose smaller values are prefixes of a larger fit
    staged: str | None = None
    truncate: Callable[[object, int], object] | None = None


MODELS: dict[str, ModelSpec] = {
    "knn": ModelSpec("knn", _fit_knn, knn_predict),
    "forest": ModelSpec("forest", _fit_forest, forest_predict),
    "boost": ModelSpec("boost", _fit_boost, boost_predict, "n_rounds", BoostModel.truncate),
}


def fit_model(name: str, data: LabeledDataset, params: Mapping | None = None, seed: int = 0):
    try:
        spec = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODELS)}") from None
    return spec.fit(data, dict(params or {}), seed)


def predict(model, X) -> np.ndarray:
    if isinstance(model, KnnModel):
        return knn_predict(model, X)[0]
    if isinstance(model, ForestModel):
        return forest_predict(model, X)[0]
    if isinstance(model, BoostModel):
        return boost_predict(model, X)[0]
    raise TypeError(f"not a classifier model: {type(model).__name__}")
