"""Versioned text serialization for fitted classifiers."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import MalformedRow
from .boost import BoostModel
from .forest import ForestModel
from .knn import KnnModel
from .tree import tree_from_lines, tree_to_lines

FORMAT_VERSION = 1
MAGIC = "profilecast-classifier"


def _g(v) -> str:
    return format(float(v), ".17g")


def dumps(model) -> str:
    if isinstance(model, KnnModel):
        lines = ["kind knn", f"n_classes {model.n_classes}", f"n_features {model.X.shape[1]}",
                 f"k {model.k}", f"n_rows {model.X.shape[0]}"]
        lines += [f"row {lab} " + " ".join(_g(v) for v in x) for x, lab in zip(model.X, model.y)]
    elif isinstance(model, ForestModel):
        lines = ["kind forest", f"n_classes {model.n_classes}", f"n_features {model.n_features}",
                 f"mtry {model.mtry}", f"min_node {model.min_node}", f"seed {model.seed}",
                 f"n_trees {model.n_trees}"]
        for tree in model.trees:
            lines.append(f"tree {tree.n_nodes}")
            lines += tree_to_lines(tree)
    elif isinstance(model, BoostModel):
        lines = ["kind boost", f"n_classes {model.n_classes}", f"n_features {model.n_features}",
                 f"learning_rate {_g(model.learning_rate)}", f"max_depth {model.max_depth}",
                 f"n_stages {model.n_stages}"]
        for tree, alpha, err in zip(model.trees, model.alphas, model.errors):
            lines.append(f"stage {_g(alpha)} {_g(err)} {tree.n_nodes}")
            lines += tree_to_lines(tree)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return "\n".join([f"{MAGIC} {FORMAT_VERSION}"] + lines) + "\n"


def loads(text: str):
    lines = text.splitlines()
    if not lines or lines[0].split()[:1] != [MAGIC]:
        raise MalformedRow(1, "not a profilecast classifier file")
    if int(lines[0].split()[1]) != FORMAT_VERSION:
        raise MalformedRow(1, f"unsupported classifier version {lines[0].split()[1]}")
    pos = 1
    head = {}

    def header(key):
        nonlocal pos
        k, _, v = lines[pos].partition(" ")
        if k != key:
            raise MalformedRow(pos + 1, f"expected {key!r}, found {k!r}")
        pos += 1
        head[key] = v
        return v

    kind = header("kind")
    h = int(header("n_classes"))
    d = int(header("n_features"))
    if kind == "knn":
        k = int(header("k"))
        n = int(header("n_rows"))
        rows = [lines[pos + i].split() for i in range(n)]
        y = np.array([int(r[1]) for r in rows], dtype=np.int64)
        X = np.array([r[2:] for r in rows], dtype=np.float64).reshape(n, d)
        return KnnModel(X, y, h, k)
    if kind == "forest":
        mtry, min_node, seed = int(header("mtry")), int(header("min_node")), int(header("seed"))
        trees = []
        for _ in range(int(header("n_trees"))):
            pos += 1  # "tree <n_nodes>"
            tree, used = tree_from_lines(lines[pos:], h)
            trees.append(tree)
            pos += used
        return ForestModel(trees, h, d, mtry, min_node, seed)
    if kind == "boost":
        lr = float(header("learning_rate"))
        depth = int(header("max_depth"))
        trees, alphas, errors = [], [], []
        for _ in range(int(header("n_stages"))):
            _, alpha, err, _ = lines[pos].split()
            pos += 1
            tree, used = tree_from_lines(lines[pos:], h)
            pos += used
            trees.append(tree)
            alphas.append(float(alpha))
            errors.append(float(err))
        return BoostModel(trees, np.array(alphas), h, d, lr, depth, np.array(errors))
    raise MalformedRow(2, f"unknown classifier kind {kind!r}")


def save(model, path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load(path):
    return loads(Path(path).read_text(encoding="utf-8"))
