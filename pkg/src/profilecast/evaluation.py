"""Hold-out splits, stratified k-fold CV, and agreement metrics.

Confusion matrices are indexed ``[predicted, observed]``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .classifiers import MODELS
from .data import LabeledDataset
from .errors import ClassTooSmall, LabelOutOfRange

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Metrics


def confusion(predicted, observed, n_classes: int) -> np.ndarray:
    predicted = np.asarray(predicted, dtype=np.int64)
    observed = np.asarray(observed, dtype=np.int64)
    if predicted.shape != observed.shape:
        raise ValueError("predicted and observed must have the same length")
    for name, arr in (("predicted", predicted), ("observed", observed)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise LabelOutOfRange(f"{name} labels must lie in 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (predicted, observed), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    return float(np.trace(cm) / cm.sum())


def _chance_agreement(cm: np.ndarray) -> tuple[float, float]:
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    p_o = np.trace(cm) / total
    p_e = float(cm.sum(axis=1) @ cm.sum(axis=0)) / total**2
    return float(p_o), p_e


def kappa_is_degenerate(cm: np.ndarray) -> bool:
    """Chance agreement is total but observed agreement is not."""
    p_o, p_e = _chance_agreement(cm)
    return p_e == 1.0 and p_o < 1.0


def cohen_kappa(cm: np.ndarray) -> float:
    """Chance-corrected agreement ``(p_o - p_e) / (1 - p_e)``.

    When ``p_e == 1`` the ratio is undefined: returns 1 if agreement is also
    perfect and 0 otherwise (see :func:`kappa_is_degenerate`).
    """
    p_o, p_e = _chance_agreement(cm)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def per_class_recall(cm: np.ndarray) -> np.ndarray:
    """Diagonal over observed-class totals; NaN for classes never observed."""
    cm = np.asarray(cm, dtype=np.float64)
    observed = cm.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(observed > 0, np.diag(cm) / observed, np.nan)


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings."""
    a = np.unique(np.asarray(a), return_inverse=True)[1]
    b = np.unique(np.asarray(b), return_inverse=True)[1]
    n = a.size
    table = np.zeros((a.max() + 1, b.max() + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    pairs = lambda v: sum(comb(int(x), 2) for x in np.ravel(v))  # noqa: E731
    index = pairs(table)
    rows, cols = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    expected = rows * cols / comb(n, 2) if n > 1 else 0.0
    top = 0.5 * (rows + cols)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


# ---------------------------------------------------------------------------
# Splitting


def stratified_split(data: LabeledDataset, test_fraction: float = 0.25, seed=0):
    """Per-class proportional hold-out split.

    Each class sends ``round(n_c * test_fraction)`` members to the test set,
    clipped so both sides keep at least one. Returns ``(train, test)``
    row indices, each sorted.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c, count in enumerate(data.class_counts()):
        if count == 0:
            continue
        if count < 2:
            raise ClassTooSmall(c, int(count), 2)
        members = rng.permutation(np.flatnonzero(data.labels == c))
        n_test = min(max(int(math.floor(count * test_fraction + 0.5)), 1), count - 1)
        test.append(members[:n_test])
        train.append(members[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_folds(labels, k: int = 10, seed=0) -> list[np.ndarray]:
    """Partition row indices into ``k`` folds, class by class.

    Each class's shuffled members are dealt round-robin, continuing from
    where the previous class stopped so fold sizes stay balanced.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    if labels.size < k:
        raise ValueError(f"need at least k={k} rows, got {labels.size}")
    rng = np.random.default_rng(seed)
    slot = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for c in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == c))
        slot[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    return [np.flatnonzero(slot == f) for f in range(k)]


# ---------------------------------------------------------------------------
# Cross-validation


@dataclass
class CVResult:
    best_params: dict
    best_score: float
    scores: list[float]
    grid: list[dict]
    metric: str = "accuracy"


def _score(metric: str, cm: np.ndarray) -> float:
    if metric == "accuracy":
        return accuracy(cm)
    if metric == "kappa":
        return cohen_kappa(cm)
    raise ValueError(f"unknown CV metric {metric!r}")


def kfold_cv(
    data: LabeledDataset,
    model: str,
    grid: Sequence[Mapping],
    k: int = 10,
    seed: int = 0,
    metric: str = "accuracy",
) -> CVResult:
    """Mean validation score of every grid point over stratified folds.

    The best grid point wins, ties going to the earliest. For models whose
    stages form prefixes (boosting rounds), one fit at the largest round
    count serves every smaller count with otherwise equal parameters.
    """
    grid = [dict(g) for g in grid]
    if not grid:
        raise ValueError("empty hyperparameter grid")
    spec = MODELS[model]
    folds = stratified_folds(data.labels, k, seed)
    everything = np.arange(data.labels.size)

    groups: dict[tuple, list[int]] = {}
    for i, g in enumerate(grid):
        key = tuple(sorted((p, repr(v)) for p, v in g.items() if p != spec.staged))
        groups.setdefault(key, []).append(i)

    fold_scores = np.zeros((len(grid), k))
    for f, val_idx in enumerate(folds):
        train = data.take(np.setdiff1d(everything, val_idx))
        val = data.take(val_idx)
        for members in groups.values():
            if spec.staged is None:
                fits = [(i, spec.fit(train, grid[i], seed)) for i in members]
            else:
                top = max(members, key=lambda i: grid[i].get(spec.staged, 0))
                full = spec.fit(train, grid[top], seed)
                fits = [(i, spec.truncate(full, int(grid[i][spec.staged]))) for i in members]
            for i, fitted in fits:
                pred = spec.predict(fitted, val.X)[0]
                fold_scores[i, f] = _score(metric, confusion(pred, val.y, data.n_classes))

    scores = fold_scores.mean(axis=1)
    best = int(np.argmax(scores))
    for i, g in enumerate(grid):
        log.debug("cv %s %s: %s=%.4f", model, g, metric, scores[i])
    return CVResult(grid[best], float(scores[best]), [float(s) for s in scores], grid, metric)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class EvalReport:
    model: str
    granularity: str
    confusion: np.ndarray
    params: dict = field(default_factory=dict)
    cv_accuracy: float = float("nan")

    @property
    def accuracy(self) -> float:
        return accuracy(self.confusion)

    @property
    def kappa(self) -> float:
        return cohen_kappa(self.confusion)

    @property
    def kappa_degenerate(self) -> bool:
        return kappa_is_degenerate(self.confusion)

    @property
    def per_class_recall(self) -> np.ndarray:
        return per_class_recall(self.confusion)

    def to_dict(self) -> dict:
        recall = [None if math.isnan(r) else round(float(r), 6) for r in self.per_class_recall]
        return {
            "model": self.model,
            "granularity": self.granularity,
            "accuracy": round(self.accuracy, 6),
            "kappa": round(self.kappa, 6),
            "kappa_degenerate": bool(self.kappa_degenerate),
            "cv_accuracy": None if math.isnan(self.cv_accuracy) else round(self.cv_accuracy, 6),
            "params": self.params,
            "per_class_recall": recall,
            "confusion": self.confusion.tolist(),
        }


def evaluate(model, name: str, test: LabeledDataset, granularity: str = "", params=None, cv_accuracy=float("nan")) -> EvalReport:
    spec = MODELS[name]
    pred = spec.predict(model, test.X)[0]
    return EvalReport(name, granularity, confusion(pred, test.y, test.n_classes), dict(params or {}), cv_accuracy)
