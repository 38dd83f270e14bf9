"""Segment tables, cluster profiles and the cross-granularity comparison."""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence

import numpy as np

from .data import N_SLOTS, ProfileMatrix


def segment_shares(labels, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster counts and shares in percent (unrounded)."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes)
    return counts, 100.0 * counts / counts.sum()


def rounded_shares(counts) -> list[str]:
    """Percent shares at one decimal that add up to exactly 100.0.

    Largest-remainder rounding: floor every share in tenths of a percent and
    hand the missing tenths to the largest remainders (lowest cluster first
    on ties).
    """
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    tenths = counts * 1000
    base = tenths // total
    remainder = tenths - base * total
    missing = 1000 - int(base.sum())
    order = sorted(range(counts.size), key=lambda h: (-remainder[h], h))
    for h in order[:missing]:
        base[h] += 1
    return [f"{b // 10}.{b % 10}" for b in base]


def profile_stats(labels, matrix: ProfileMatrix, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster feature means and sds (ddof 0); NaN rows for empty clusters."""
    labels = np.asarray(labels, dtype=np.int64)
    X = matrix.features
    mean = np.full((n_classes, X.shape[1]), np.nan)
    sd = np.full((n_classes, X.shape[1]), np.nan)
    for h in range(n_classes):
        rows = X[labels == h]
        if rows.size:
            mean[h] = rows.mean(axis=0)
            sd[h] = rows.std(axis=0)
    return mean, sd


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else format(float(v), ".17g")


def report_segments(labels, matrix: ProfileMatrix, n_classes: int, segments_path, profiles_path) -> None:
    """Write the segment-share table and the per-cluster mean/sd profile CSV.

    The profile CSV covers the 48 mean-profile slots only, also when the
    matrix carries per-slot sd features as well.
    """
    counts, _ = segment_shares(labels, n_classes)
    shares = rounded_shares(counts)
    with open(segments_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "count", "share_pct"])
        for h in range(n_classes):
            w.writerow([h, int(counts[h]), shares[h]])
    mean, sd = profile_stats(labels, matrix, n_classes)
    with open(profiles_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "slot", "mean", "sd"])
        n_slots = min(N_SLOTS, mean.shape[1])
        for h in range(n_classes):
            for j in range(n_slots):
                w.writerow([h, j, _fmt(mean[h, j]), _fmt(sd[h, j])])


def write_confusion(cm: np.ndarray, path) -> None:
    """Confusion matrix as column percentages (1 decimal).

    Rows are predicted classes and columns observed classes, so each
    non-empty column sums to 100. Raw counts live in the eval JSON.
    """
    cm = np.asarray(cm)
    col = cm.sum(axis=0)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["predicted\\observed"] + [str(c) for c in range(cm.shape[1])])
        for p in range(cm.shape[0]):
            cells = [f"{100.0 * cm[p, o] / col[o]:.1f}" if col[o] else "" for o in range(cm.shape[1])]
            w.writerow([str(p)] + cells)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


REPORT_COLUMNS = ("granularity", "model", "status", "accuracy", "kappa", "cv_accuracy", "n_train", "n_test", "params")


def write_comparison(rows: Sequence[dict], path) -> None:
    """One row per (granularity, classifier) attempted."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            out = []
            for c in REPORT_COLUMNS:
                v = r.get(c, "")
                if isinstance(v, float):
                    v = "" if math.isnan(v) else f"{v:.4f}"
                elif isinstance(v, dict):
                    v = json.dumps(v, sort_keys=True, separators=(",", ":"))
                out.append(v)
            w.writerow(out)


def read_comparison(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
