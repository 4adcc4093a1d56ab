"""Command-line interface.

Subcommands: synth, features, evaluate, search, report. The LAKIN_THREADS
environment variable caps the worker pool used for per-trial processing and
the configuration search.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import ml, report, synth
from .data import load_manifest
from .errors import LakinError
from .features import FEATURE_NAMES
from .ml import (KNN_K_RANGE, ClassifierConfig, exhaustive_search, loocv,
                 search_config_count)
from .orientation import MountingConfig
from .pipeline import (feature_matrix_from_results, load_feature_matrix,
                       run_pipeline, write_features_csv, write_kinematics_csv,
                       write_lr_csv)

log = logging.getLogger(__name__)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LakinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lakin",
                                     description="Leg-agility kinematics and UPDRS scoring")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patients", type=int, default=36)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=10)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="compute per-trial feature tables")
    _add_pipeline_args(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--export-kinematics", action="store_true",
                   help="also write per-trial t,theta,omega CSVs")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("evaluate", help="leave-one-out evaluation of one configuration")
    _add_matrix_source_args(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--classifier", choices=ml.METHODS, default="knn")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--features", type=_feature_list, default=",".join(FEATURE_NAMES),
                   help="comma-separated feature subset")
    p.add_argument("--pca-dims", type=int, default=None)
    p.add_argument("--svm-c", type=float, default=1.0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("search", help="exhaustive configuration search ranked by AuC")
    _add_matrix_source_args(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--features", type=_feature_list, default=",".join(FEATURE_NAMES),
                   help="comma-separated candidate features")
    p.add_argument("--methods", type=_method_list, default=",".join(ml.METHODS))
    p.add_argument("--no-pca", action="store_true", help="skip PCA variants")
    p.add_argument("--svm-c", type=float, default=1.0)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("report", help="plot-data bundles and rendered figures")
    _add_pipeline_args(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--eval-report", type=Path, default=None,
                   help="evaluate output JSON whose CDF should be plotted")
    p.add_argument("--trajectory-features", type=_feature_list, default="Theta,Omega",
                   help="feature pair or triple for the centroid trajectory")
    p.set_defaults(func=cmd_report)
    return parser


def _add_pipeline_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--segmentation", choices=("labels", "auto"), default="labels")
    p.add_argument("--no-mag", action="store_true",
                   help="fuse with gravity correction only")
    p.add_argument("--femur-axis", type=_axis, default=None)
    p.add_argument("--frontal-axis", type=_axis, default=None)
    p.add_argument("--beta", type=float, default=None, help="fusion filter gain")


def _add_matrix_source_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--features-csv", type=Path, help="features table from `lakin features`")
    src.add_argument("--manifest", type=Path, help="compute features inline from a manifest")
    p.add_argument("--segmentation", choices=("labels", "auto"), default="labels")
    p.add_argument("--seed", type=int, default=0, help="accepted for reproducible scripts")


def _feature_list(text: str) -> tuple[str, ...]:
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    unknown = [n for n in names if n not in FEATURE_NAMES]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown features {unknown}; choose from {', '.join(FEATURE_NAMES)}")
    return names


def _method_list(text: str) -> tuple[str, ...]:
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    unknown = [m for m in methods if m not in ml.METHODS]
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown methods {unknown}")
    return methods


def _axis(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("axis needs three comma-separated components")
    return np.asarray(parts)


def _mounting(args) -> MountingConfig:
    kwargs = {}
    if getattr(args, "femur_axis", None) is not None:
        kwargs["femur_axis"] = args.femur_axis
    if getattr(args, "frontal_axis", None) is not None:
        kwargs["frontal_normal_axis"] = args.frontal_axis
    if getattr(args, "beta", None) is not None:
        kwargs["beta"] = args.beta
    return MountingConfig(**kwargs)


def cmd_synth(args) -> int:
    manifest = synth.make_dataset(args.out, patients=args.patients, seed=args.seed,
                                  noise_sd=args.noise_sd, reps=args.reps)
    print(f"wrote {manifest}")
    return 0


def cmd_features(args) -> int:
    entries = load_manifest(args.manifest)
    results = run_pipeline(entries, mounting=_mounting(args),
                           segmentation=args.segmentation,
                           use_mag=not args.no_mag)
    args.out.mkdir(parents=True, exist_ok=True)
    write_features_csv(results, args.out / "features.csv")
    pair_errors = write_lr_csv(results, args.out / "lr_features.csv")
    if args.export_kinematics:
        kin_dir = args.out / "kinematics"
        for res in results:
            if res.ok:
                write_kinematics_csv(res, kin_dir / f"{res.meta.trial_id}.csv")
    failures = [r for r in results if not r.ok]
    for res in failures:
        print(f"trial {res.meta.trial_id}: {res.error}", file=sys.stderr)
    for msg in pair_errors:
        print(f"pair {msg}", file=sys.stderr)
    n_ok = len(results) - len(failures)
    print(f"features: {n_ok}/{len(results)} trials -> {args.out / 'features.csv'}")
    return 0 if not failures and not pair_errors else 1


def _matrix_from_args(args) -> tuple[ml.FeatureMatrix, int]:
    if args.features_csv is not None:
        return load_feature_matrix(args.features_csv), 0
    entries = load_manifest(args.manifest)
    results = run_pipeline(entries, segmentation=args.segmentation)
    failures = sum(1 for r in results if not r.ok)
    for res in results:
        if not res.ok:
            print(f"trial {res.meta.trial_id}: {res.error}", file=sys.stderr)
    return feature_matrix_from_results(results), failures


def cmd_evaluate(args) -> int:
    matrix, failures = _matrix_from_args(args)
    config = ClassifierConfig(
        method=args.classifier,
        features=args.features,
        k=args.k if args.classifier == "knn" else None,
        use_pca=args.pca_dims is not None,
        pca_dims=args.pca_dims,
        svm_c=args.svm_c,
    )
    result = loocv(matrix, config)
    args.out.mkdir(parents=True, exist_ok=True)
    report_path = args.out / "report.json"
    with report_path.open("w") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    report.write_cdf_csv(result.cdf, args.out / "cdf.csv")
    print(f"evaluate: {config.describe()} -> AuC {result.auc:.6f} ({report_path})")
    return 0 if failures == 0 else 1


def cmd_search(args) -> int:
    matrix, failures = _matrix_from_args(args)
    candidates = matrix.select(args.features)
    include_pca = not args.no_pca
    results = exhaustive_search(candidates, methods=args.methods,
                                include_pca=include_pca, svm_c=args.svm_c)
    expected = search_config_count(len(args.features), methods=args.methods,
                                   n_ks=len(KNN_K_RANGE), include_pca=include_pca)
    if len(results) != expected:
        raise LakinError(
            f"search enumerated {len(results)} configurations, expected {expected}")
    args.out.mkdir(parents=True, exist_ok=True)
    out_csv = args.out / "search.csv"
    with out_csv.open("w", newline="") as fh:
        fh.write("rank,auc,method,k,use_pca,pca_dims,n_features,features\n")
        for rank, res in enumerate(results, start=1):
            c = res.config
            fh.write(",".join([
                str(rank), repr(res.auc), c.method,
                str(c.k) if c.k is not None else "",
                str(int(c.use_pca)),
                str(c.pca_dims) if c.pca_dims is not None else "",
                str(len(c.features)), "+".join(c.features),
            ]) + "\n")
    best = results[0]
    print(f"search: {len(results)} configurations; best {best.config.describe()} "
          f"AuC {best.auc:.6f} -> {out_csv}")
    return 0 if failures == 0 else 1


def cmd_report(args) -> int:
    entries = load_manifest(args.manifest)
    results = run_pipeline(entries, mounting=_mounting(args),
                           segmentation=args.segmentation,
                           use_mag=not args.no_mag)
    eval_cdf = None
    if args.eval_report is not None:
        with args.eval_report.open() as fh:
            payload = json.load(fh)
        eval_cdf = [point["fraction"] for point in payload["cdf"]]
    if len(args.trajectory_features) not in (2, 3):
        print("error: --trajectory-features needs 2 or 3 names", file=sys.stderr)
        return 2
    written = report.emit_report(results, args.out,
                                 trajectory_features=args.trajectory_features,
                                 eval_cdf=eval_cdf)
    failures = [r for r in results if not r.ok]
    for res in failures:
        print(f"trial {res.meta.trial_id}: {res.error}", file=sys.stderr)
    print(f"report: {len(written)} files under {args.out}")
    return 0 if not failures else 1


if __name__ == "__main__":
    sys.exit(main())
