"""Two-stage experiment: cluster each sample with a GMM, then predict the
cluster labels from the same profile rows with every configured classifier.

All artifacts are written to a staging directory inside ``out_dir`` and
moved into place only when the whole run succeeds. Nothing run-time
dependent (timings, paths, hostnames) goes into the artifact directory, so
two runs of one config produce byte-identical output.
"""

from __future__ import annotations

import csv
import logging
import math
import shutil
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gmm, report, synth
from .classifiers import MODELS
from .config import PipelineConfig
from .data import Granularity, LabeledDataset, build_matrix, filter_by_coverage, load_csv, write_labels, write_matrix
from .errors import ConfigInvalid, DataError, ProfilecastError
from .evaluation import adjusted_rand_index, evaluate, kfold_cv, stratified_folds, stratified_split

log = logging.getLogger(__name__)


class StageFailed(ProfilecastError):
    """Wraps the error of a pipeline stage; keeps the original exit code."""

    def __init__(self, stage: str, cause: ProfilecastError):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code


@dataclass
class RunResult:
    out_dir: Path
    manifest: dict
    rows: list[dict]
    timings: dict[str, float] = field(default_factory=dict)


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    log.info("stage %s: start", name)
    try:
        yield
    except StageFailed:
        raise
    except ProfilecastError as exc:
        raise StageFailed(name, exc) from exc
    finally:
        timings[name] = time.perf_counter() - start
        log.info("stage %s: %.2fs", name, timings[name])


def prepare_out_dir(out_dir: Path, overwrite: bool = False) -> Path:
    """Create ``out_dir`` and a staging directory in it, before any compute."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        leftover = [p for p in out_dir.iterdir() if not p.name.startswith(".staging-")]
        if leftover and not overwrite:
            raise ConfigInvalid(f"output directory {out_dir} is not empty (use overwrite)")
        return Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    except OSError as exc:
        raise ConfigInvalid(f"output directory {out_dir} is not writable: {exc}") from None


def _knn_grid(grid: list[dict], labels: np.ndarray, k: int, seed: int) -> list[dict]:
    # every fold's training part must hold at least K rows
    smallest = min(labels.size - f.size for f in stratified_folds(labels, k, seed))
    kept = [g for g in grid if int(g.get("k", 5)) <= smallest]
    if kept:
        return kept
    return [{**grid[0], "k": smallest}]


def _classify(cfg: PipelineConfig, g: str, name: str, train: LabeledDataset, test: LabeledDataset, stage_dir: Path):
    folds = min(cfg.eval.k, train.labels.size)
    grid = list(cfg.grids[name])
    if name == "knn":
        grid = _knn_grid(grid, train.labels, folds, cfg.seed)
    cv = kfold_cv(train, name, grid, k=folds, seed=cfg.seed, metric=cfg.eval.metric)
    model = MODELS[name].fit(train, cv.best_params, cfg.seed)
    rep = evaluate(model, name, test, g, cv.best_params, cv.best_score)
    out = rep.to_dict()
    out["cv_metric"] = cv.metric
    out["cv_folds"] = folds
    out["cv_scores"] = [{"params": p, "score": round(s, 6)} for p, s in zip(cv.grid, cv.scores)]
    out["n_train"] = int(train.labels.size)
    out["n_test"] = int(test.labels.size)
    report.write_json(out, stage_dir / f"eval_{name}_{g}.json")
    report.write_confusion(rep.confusion, stage_dir / f"confusion_{name}_{g}.csv")
    if rep.kappa_degenerate:
        log.warning("%s/%s: chance agreement is total; kappa reported as 0", g, name)
    return {
        "granularity": g, "model": name, "status": "ok",
        "accuracy": rep.accuracy, "kappa": rep.kappa, "cv_accuracy": cv.best_score,
        "n_train": out["n_train"], "n_test": out["n_test"], "params": cv.best_params,
    }


def _write_candidates(cands, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_components", "structure", "status", "loglik", "bic", "iterations"])
        for c in cands:
            if c.model is None:
                w.writerow([c.n_components, c.structure.name, c.error, "", "", ""])
            else:
                m = c.model
                w.writerow([c.n_components, c.structure.name, "ok", format(m.loglik, ".10g"),
                            format(m.bic, ".10g"), len(m.loglik_history) - 1])


def _load_series(cfg: PipelineConfig, stage_dir: Path):
    if cfg.synth is not None:
        series, truth = synth.generate(cfg.synth)
        synth.write_truth(truth, stage_dir / "truth.csv")
    else:
        series, truth = load_csv(cfg.readings), None
    kept = filter_by_coverage(series, cfg.coverage)
    if not kept:
        raise DataError(f"no entity reaches coverage {cfg.coverage}")
    if len(kept) < len(series):
        log.info("dropped %d of %d entities below coverage %.3f", len(series) - len(kept), len(series), cfg.coverage)
    return kept, truth, len(series)


def run_pipeline(cfg: PipelineConfig, overwrite: bool = False, timings_path=None) -> RunResult:
    out_dir = Path(cfg.out_dir)
    stage_dir = prepare_out_dir(out_dir, overwrite)
    timings: dict[str, float] = {}
    try:
        manifest, rows = _run(cfg, stage_dir, timings)
        report.write_comparison(rows, stage_dir / "report.csv")
        report.write_json(manifest, stage_dir / "run_manifest.json")
        for p in sorted(stage_dir.iterdir()):
            target = out_dir / p.name
            if target.exists():
                target.unlink()
            p.replace(target)
    finally:
        shutil.rmtree(stage_dir, ignore_errors=True)
    if timings_path is not None:
        report.write_json({k: round(v, 3) for k, v in timings.items()}, timings_path)
    return RunResult(out_dir, manifest, rows, timings)


def _run(cfg: PipelineConfig, stage_dir: Path, timings: dict):
    with _stage("ingest", timings):
        series, truth, n_input = _load_series(cfg, stage_dir)
    manifest: dict = {
        "config": cfg.to_dict(),
        "n_input_entities": n_input,
        "n_entities": len(series),
        "granularities": {},
    }
    rows: list[dict] = []
    for gran in cfg.granularities:
        g = Granularity(gran).value
        with _stage(f"features:{g}", timings):
            matrix = build_matrix(series, gran, cfg.features)
            write_matrix(matrix, stage_dir / f"matrix_{g}.csv")
        with _stage(f"cluster:{g}", timings):
            cands: list = []
            model = gmm.select_model(
                matrix, cfg.gmm.h_range, cfg.gmm.structures, seed=cfg.seed,
                tol=cfg.gmm.tol, max_iter=cfg.gmm.max_iter, reg=cfg.gmm.reg, candidates=cands,
            )
            labels, _ = gmm.assign(model, matrix)
            h = model.n_components
            gmm.save_model(model, stage_dir / f"model_{g}.gmm")
            write_labels(stage_dir / f"labels_{g}.csv", matrix.row_ids, labels)
            _write_candidates(cands, stage_dir / f"bic_{g}.csv")
            report.report_segments(labels, matrix, h, stage_dir / f"segments_{g}.csv", stage_dir / f"profiles_{g}.csv")
        counts = np.bincount(labels, minlength=h)
        info = {
            "n_rows": matrix.n_rows,
            "n_features": matrix.n_features,
            "n_components": h,
            "structure": model.structure.name,
            "loglik": round(model.loglik, 6),
            "bic": round(model.bic, 6),
            "cluster_sizes": counts.tolist(),
            "failed_fits": sum(c.model is None for c in cands),
        }
        if truth is not None and gran == Granularity.DISAGGREGATED:
            info["ari_vs_truth"] = round(adjusted_rand_index(labels, [truth[r] for r in matrix.row_ids]), 6)
        log.info("%s: selected H=%d %s (bic %.6g)", g, h, model.structure.name, model.bic)

        data = LabeledDataset(matrix, labels, h)
        try:
            with _stage(f"split:{g}", timings):
                if np.count_nonzero(counts) < 2:
                    raise DataError("fewer than two non-empty clusters; nothing to classify")
                train_idx, test_idx = stratified_split(data, cfg.eval.test_fraction, cfg.seed)
        except StageFailed as exc:
            log.error("%s", exc)
            info["split_error"] = str(exc)
            rows += [{"granularity": g, "model": m, "status": f"failed: {exc.cause}"} for m in cfg.classifiers]
            manifest["granularities"][g] = info
            continue
        train, test = data.take(train_idx), data.take(test_idx)
        info["n_train"], info["n_test"] = int(train_idx.size), int(test_idx.size)
        info["classifiers"] = {}
        for name in cfg.classifiers:
            try:
                with _stage(f"classify:{g}:{name}", timings):
                    row = _classify(cfg, g, name, train, test, stage_dir)
            except StageFailed as exc:
                log.error("%s", exc)
                rows.append({"granularity": g, "model": name, "status": f"failed: {exc.cause}"})
                info["classifiers"][name] = {"status": "failed", "error": str(exc.cause)}
                continue
            rows.append(row)
            info["classifiers"][name] = {
                "params": row["params"],
                "cv_accuracy": round(row["cv_accuracy"], 6),
                "accuracy": round(row["accuracy"], 6),
                "kappa": round(row["kappa"], 6),
            }
        _check_ordering(g, info["classifiers"])
        manifest["granularities"][g] = info
    return manifest, rows


def _check_ordering(g: str, results: dict) -> None:
    # tree ensembles are expected to match or beat KNN; only worth a warning
    knn = results.get("knn", {}).get("accuracy")
    if knn is None or math.isnan(knn):
        return
    for name in ("forest", "boost"):
        acc = results.get(name, {}).get("accuracy")
        if acc is not None and acc < knn:
            log.warning("%s: %s accuracy %.3f is below knn %.3f", g, name, acc, knn)
