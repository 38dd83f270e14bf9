import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from oracles import kappa_exact
from profilecast.data import LabeledDataset, ProfileMatrix
from profilecast.errors import ClassTooSmall, LabelOutOfRange
from profilecast.evaluation import (
    EvalReport, accuracy, adjusted_rand_index, cohen_kappa, confusion, evaluate, kappa_is_degenerate,
    kfold_cv, per_class_recall, stratified_folds, stratified_split,
)
from profilecast.classifiers import fit_model

# (matrix, accuracy, kappa) worked by hand
HAND = [
    ([[2, 1], [1, 2]], 4 / 6, 1 / 3),
    ([[5, 0], [0, 5]], 1.0, 1.0),
    ([[1, 1], [1, 1]], 0.5, 0.0),
    ([[0, 3], [3, 0]], 0.0, -1.0),
    ([[3, 0, 0], [0, 4, 0], [0, 0, 1]], 1.0, 1.0),
    ([[10]], 1.0, 1.0),
    ([[4, 0], [6, 0]], 0.4, 0.0),
    ([[1, 2], [3, 4]], 0.5, -2 / 23),
    ([[20, 5], [10, 15]], 0.7, 0.4),
    ([[2, 2, 2], [2, 2, 2], [2, 2, 2]], 1 / 3, 0.0),
    ([[0, 1], [1, 0]], 0.0, -1.0),
    ([[9, 1, 0], [1, 8, 1], [0, 1, 9]], 26 / 30, 0.8),
]


@pytest.mark.parametrize("cm, acc, kappa", HAND)
def test_hand_values(cm, acc, kappa):
    cm = np.array(cm)
    assert abs(accuracy(cm) - acc) <= 1e-12
    assert abs(cohen_kappa(cm) - kappa) <= 1e-12
    exact_acc, exact_kappa = kappa_exact(cm)
    assert abs(float(exact_acc) - acc) <= 1e-12 and abs(float(exact_kappa) - kappa) <= 1e-12


def test_total_chance_agreement():
    # every prediction and every observation is one class: p_e = 1 and p_o = 1
    for cm in (np.array([[5, 0], [0, 0]]), np.array([[3]]), np.array([[0, 0], [0, 7]])):
        assert cohen_kappa(cm) == 1.0
        assert not kappa_is_degenerate(cm)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5).flatmap(lambda h: st.lists(
    st.lists(st.integers(0, 20), min_size=h, max_size=h), min_size=h, max_size=h)))
def test_against_exact_fractions(rows):
    cm = np.array(rows)
    if cm.sum() == 0:
        return
    acc, kappa = kappa_exact(cm)
    assert abs(accuracy(cm) - float(acc)) <= 1e-12
    assert abs(cohen_kappa(cm) - float(kappa)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40), st.permutations(range(4)))
def test_metrics_invariant_under_relabelling(pairs, perm):
    p, o = np.array(pairs).T
    perm = np.array(perm)
    a = confusion(p, o, 4)
    b = confusion(perm[p], perm[o], 4)
    assert accuracy(a) == accuracy(b)
    assert cohen_kappa(a) == pytest.approx(cohen_kappa(b), abs=1e-12)


def test_kappa_one_iff_diagonal():
    assert cohen_kappa(np.diag([3, 1, 4])) == 1.0
    assert cohen_kappa(np.array([[3, 1], [0, 4]])) < 1.0


def test_kappa_zero_for_proportional_rows():
    # rows proportional to the observed marginals (1:3)
    assert abs(cohen_kappa(np.array([[2, 6], [1, 3]]))) <= 1e-12


def test_confusion_counting():
    cm = confusion([0, 0, 1], [0, 1, 1], 2)
    assert cm.tolist() == [[1, 1], [0, 1]]
    assert np.array_equal(confusion([1, 0, 0], [1, 1, 0], 2), cm)
    assert np.array_equal(confusion([0, 1, 2], [0, 1, 2], 3), np.eye(3, dtype=int))
    with pytest.raises(LabelOutOfRange):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(ValueError):
        confusion([0], [0, 1], 2)


def test_per_class_recall():
    cm = np.array([[2, 1, 0], [0, 1, 0], [0, 0, 0]])
    r = per_class_recall(cm)
    assert r[0] == 1.0 and r[1] == 0.5 and np.isnan(r[2])


def test_accuracy_extremes():
    assert accuracy(np.diag([1, 2])) == 1.0
    assert accuracy(np.array([[0, 2], [3, 0]])) == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_ari_matches_reference(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 5, 80)
    b = np.where(rng.random(80) < 0.7, a, rng.integers(0, 4, 80))
    assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
    assert adjusted_rand_index(a, (a + 2) % 5) == pytest.approx(1.0, abs=1e-12)


def dataset(labels, d=2, seed=0):
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(labels.size, d)) + labels[:, None] * 10.0
    m = ProfileMatrix([f"r{i:03d}" for i in range(labels.size)], X, [f"f{j}" for j in range(d)])
    return LabeledDataset(m, labels, int(labels.max()) + 1)


def test_split_exact_proportions():
    data = dataset(np.repeat(np.arange(4), 25))
    tr, te = stratified_split(data, 0.2, seed=1)
    assert np.bincount(data.labels[te]).tolist() == [5, 5, 5, 5]
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(100))


def test_split_preconditions():
    data = dataset(np.repeat(np.arange(2), 5))
    for f in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            stratified_split(data, f)
    with pytest.raises(ClassTooSmall):
        stratified_split(dataset([0, 0, 0, 1]), 0.25)


def test_split_deterministic():
    data = dataset(np.repeat(np.arange(3), 11))
    a = stratified_split(data, 0.25, 7)
    b = stratified_split(data, 0.25, 7)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=10, max_size=80), st.integers(2, 10), st.integers(0, 99))
def test_folds_partition_and_balance(labels, k, seed):
    labels = np.array(labels)
    if labels.size < k:
        return
    folds = stratified_folds(labels, k, seed)
    joined = np.concatenate(folds)
    assert sorted(joined.tolist()) == list(range(labels.size))
    for c in np.unique(labels):
        per = [int(np.sum(labels[f] == c)) for f in folds]
        assert max(per) - min(per) <= 1
    sizes = [f.size for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_cv_single_point_and_duplicates():
    data = dataset(np.repeat(np.arange(3), 10))
    res = kfold_cv(data, "knn", [{"k": 3}], k=5, seed=0)
    assert res.best_params == {"k": 3} and res.best_score == 1.0
    res = kfold_cv(data, "knn", [{"k": 5}, {"k": 5}], k=5, seed=0)
    assert res.best_params == {"k": 5} and res.scores[0] == res.scores[1]


def test_cv_prefers_k1_on_separable_data():
    labels = np.repeat(np.arange(6), 20)
    data = dataset(labels, seed=3)
    res = kfold_cv(data, "knn", [{"k": 1}, {"k": 101}], k=10, seed=0)
    assert res.best_params == {"k": 1}
    assert res.scores[0] > res.scores[1]


def test_cv_staged_boost_matches_separate_fits():
    data = dataset(np.repeat(np.arange(3), 12), seed=2)
    grid = [{"n_rounds": 3, "max_depth": 1}, {"n_rounds": 8, "max_depth": 1}]
    staged = kfold_cv(data, "boost", grid, k=4, seed=0)
    separate = [kfold_cv(data, "boost", [g], k=4, seed=0).best_score for g in grid]
    assert staged.scores == separate


def test_evaluate_report():
    data = dataset(np.repeat(np.arange(3), 10))
    model = fit_model("knn", data, {"k": 1})
    rep = evaluate(model, "knn", data, "disaggregated", {"k": 1}, 0.9)
    assert isinstance(rep, EvalReport)
    assert rep.accuracy == 1.0 and rep.kappa == 1.0
    d = rep.to_dict()
    assert d["confusion"] == np.diag([10, 10, 10]).tolist()
    assert d["per_class_recall"] == [1.0, 1.0, 1.0]
    assert d["kappa_degenerate"] is False
