"""Command-line entry point: ``profilecast <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import gmm, report, synth
from .classifiers import MODELS, io as model_io
from .config import load_config, load_synth_config
from .data import (
    Granularity, build_matrix, filter_by_coverage, labeled_dataset, load_csv, read_labels,
    read_matrix, write_csv, write_labels, write_matrix,
)
from .errors import ConfigInvalid, ProfilecastError
from .evaluation import evaluate

log = logging.getLogger("profilecast")


def _param(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    for cast in (int, float):
        try:
            return key, cast(value)
        except ValueError:
            pass
    return key, value


def cmd_synth(args) -> int:
    cfg = load_synth_config(args.config) if args.config else synth.PopulationConfig()
    if args.seed is not None:
        cfg = synth.PopulationConfig(**{**cfg.__dict__, "seed": args.seed})
    series, truth = synth.generate(cfg)
    write_csv(series, args.out)
    if args.truth:
        synth.write_truth(truth, args.truth)
    log.info("wrote %d entities to %s", len(series), args.out)
    return 0


def cmd_ingest(args) -> int:
    series = filter_by_coverage(load_csv(args.input), args.coverage)
    matrix = build_matrix(series, args.granularity, args.features)
    write_matrix(matrix, args.out)
    log.info("wrote %dx%d %s matrix to %s", matrix.n_rows, matrix.n_features, args.granularity, args.out)
    return 0


def cmd_cluster(args) -> int:
    matrix = read_matrix(args.input)
    if not 1 <= args.h_min <= args.h_max:
        raise ConfigInvalid("need 1 <= --h-min <= --h-max")
    try:
        structures = [gmm.CovarianceStructure.parse(s) for s in args.structures.split(",")]
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    model = gmm.select_model(matrix, range(args.h_min, args.h_max + 1), structures,
                             seed=args.seed, tol=args.tol, max_iter=args.max_iter)
    labels, _ = gmm.assign(model, matrix)
    gmm.save_model(model, args.out)
    if args.labels:
        write_labels(args.labels, matrix.row_ids, labels)
    if args.segments:
        profiles = args.profiles or str(Path(args.segments).with_name("profiles.csv"))
        report.report_segments(labels, matrix, model.n_components, args.segments, profiles)
    print(f"selected H={model.n_components} structure={model.structure.name} bic={model.bic:.6f}")
    return 0


def _dataset(matrix_path, labels_path, n_classes=0):
    return labeled_dataset(read_matrix(matrix_path), read_labels(labels_path), n_classes)


def cmd_train(args) -> int:
    data = _dataset(args.matrix, args.labels)
    params = dict(args.param or [])
    model = MODELS[args.model].fit(data, params, args.seed)
    model_io.save(model, args.out)
    log.info("trained %s on %d rows", args.model, data.labels.size)
    return 0


def cmd_evaluate(args) -> int:
    model = model_io.load(args.model)
    name = {"KnnModel": "knn", "ForestModel": "forest", "BoostModel": "boost"}[type(model).__name__]
    data = _dataset(args.matrix, args.labels, model.n_classes)
    rep = evaluate(model, name, data, args.granularity or "")
    out = rep.to_dict()
    if args.confusion:
        report.write_confusion(rep.confusion, args.confusion)
    if args.out:
        report.write_json(out, args.out)
    print(f"accuracy={rep.accuracy:.4f} kappa={rep.kappa:.4f}")
    return 0


def cmd_pipeline(args) -> int:
    from .pipeline import run_pipeline

    cfg = load_config(args.config)
    if args.out:
        cfg = type(cfg)(**{**cfg.__dict__, "out_dir": Path(args.out)})
    result = run_pipeline(cfg, overwrite=args.overwrite, timings_path=args.timings)
    for row in result.rows:
        acc = row.get("accuracy")
        shown = f"acc={acc:.3f} kappa={row['kappa']:.3f}" if acc is not None else ""
        print(f"{row['granularity']:<14} {row['model']:<7} {row['status']:<6} {shown}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="profilecast", description="Segment and predict load-profile clusters.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic population")
    s.add_argument("--config", help="TOML with population fields (or a [synth] table)")
    s.add_argument("--out", required=True, help="readings CSV")
    s.add_argument("--truth", help="ground-truth CSV (entity_id,archetype_id)")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="readings CSV to profile matrix")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--granularity", choices=[g.value for g in Granularity], default="disaggregated")
    s.add_argument("--features", choices=["mean", "mean+std"], default="mean")
    s.add_argument("--coverage", type=float, default=0.9)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("cluster", help="select and fit a GMM, write labels")
    s.add_argument("--in", dest="input", required=True, help="profile matrix CSV")
    s.add_argument("--out", required=True, help="model file")
    s.add_argument("--labels")
    s.add_argument("--segments", help="segment-share CSV")
    s.add_argument("--profiles", help="per-cluster profile CSV")
    s.add_argument("--h-min", type=int, default=2)
    s.add_argument("--h-max", type=int, default=15)
    s.add_argument("--structures", default=",".join(st.name for st in gmm.ALL_STRUCTURES))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iter", type=int, default=500)
    s.set_defaults(func=cmd_cluster)

    s = sub.add_parser("train", help="fit one classifier")
    s.add_argument("--model", choices=list(MODELS), required=True)
    s.add_argument("--matrix", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE",
                   help="hyperparameter, e.g. k=5, n_trees=500, mtry=sqrt, n_rounds=200")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score a trained classifier on labeled rows")
    s.add_argument("--model", required=True)
    s.add_argument("--matrix", required=True)
    s.add_argument("--labels", required=True)
    s.add_argument("--granularity")
    s.add_argument("--out", help="report JSON")
    s.add_argument("--confusion", help="confusion CSV (percent)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", help="run the full two-arm experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="override out_dir")
    s.add_argument("--overwrite", action="store_true", help="allow a non-empty output directory")
    s.add_argument("--timings", help="write stage timings (JSON) here, outside the artifacts")
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProfilecastError as exc:
        print(f"profilecast: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"profilecast: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
