"""Command-line interface: ``care detect | eval | synth-bv | synth-error``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import SyntheticBVSpec, SyntheticDetectorSpec, generate_bv_synthetic, load_csv
from .ensemble import MODES, EnsembleConfig, run
from .errors import DataError, NumericalError, ParameterError
from .evaluation import (
    DEFAULT_K,
    Procedure,
    aggregation_study,
    bias_variance_experiment,
    error_estimation_study,
    precision_recall_curve,
    sign_test,
    write_bv_results,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("care")


def _seed(value):
    if value is not None:
        return value
    env = os.environ.get("CARE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ParameterError(f"CARE_SEED must be an integer, got {env!r}") from None


def _label_column(value):
    if value is None:
        return None
    if value == "last":
        return -1
    try:
        return int(value)
    except ValueError:
        return value


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_rows(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# --------------------------------------------------------------------------
# detect
# --------------------------------------------------------------------------


def cmd_detect(args) -> int:
    if args.from_manifest:
        try:
            manifest = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"manifest not found: {args.from_manifest}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"manifest {args.from_manifest} is not valid JSON: {exc}") from None
        cfg = dict(manifest["config"])
        cfg["threads"] = args.threads or cfg.get("threads", 1)
        config = EnsembleConfig(**cfg)
        data = manifest["data"]
        input_path = Path(args.input or data["path"])
        label_column, delimiter, positive = data["label_column"], data["delimiter"], data["positive_label"]
        if not input_path.is_file():
            raise DataError(f"input file not found: {input_path}")
        if _sha256(input_path) != data["sha256"]:
            raise DataError(f"{input_path} does not match the manifest fingerprint")
    else:
        if not args.input:
            raise ParameterError("--input is required")
        input_path = Path(args.input)
        label_column = _label_column(args.label_column)
        delimiter, positive = args.delimiter, args.positive_label
        config = EnsembleConfig(
            k=args.k,
            b=args.bags,
            max_iter=args.max_iter,
            confidence=args.confidence,
            detector_kind=args.detector,
            seed=_seed(args.seed),
            mode=args.mode,
            threads=args.threads or 1,
            verbose=args.verbose,
        )

    dataset = load_csv(input_path, label_column=label_column, delimiter=delimiter, positive_label=positive)
    log.info("loaded %s: n=%d d=%d", input_path, dataset.n, dataset.d)
    result = run(dataset, config, timings=args.timings)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "scores": out / "scores.csv",
        "ranks": out / "ranks.csv",
        "diagnostics": out / "diagnostics.jsonl",
        "manifest": out / "manifest.json",
    }
    _write_rows(paths["scores"], ["index", "score"],
                ((i, repr(float(s))) for i, s in enumerate(result.fs)))
    _write_rows(paths["ranks"], ["rank", "index", "score"],
                ((r + 1, int(i), repr(float(result.fs[i]))) for r, i in enumerate(result.rank)))
    with paths["diagnostics"].open("w", encoding="utf-8") as fh:
        for record in result.diagnostics:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    cfg = config.to_dict()
    cfg.pop("threads")
    _write_json(paths["manifest"], {
        "version": __version__,
        "config": cfg,
        "data": {
            "path": str(input_path),
            "sha256": _sha256(input_path),
            "label_column": label_column,
            "delimiter": delimiter,
            "positive_label": positive,
            "n": dataset.n,
            "d": dataset.d,
        },
        "outputs": {k: v.name for k, v in paths.items() if k != "manifest"},
    })

    if dataset.labels is not None and 0 < dataset.labels.sum() < dataset.n:
        ap = precision_recall_curve(result.fs, dataset.labels).ap
        print(f"AP {ap!r}")
    print(f"wrote {paths['scores']} and {paths['ranks']}")
    return EXIT_OK


# --------------------------------------------------------------------------
# eval
# --------------------------------------------------------------------------


def _read_scores(path: Path) -> np.ndarray:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError:
        raise DataError(f"score file not found: {path}") from None
    if not rows or "index" not in rows[0] or "score" not in rows[0]:
        raise DataError(f"{path} needs 'index' and 'score' columns")
    try:
        pairs = sorted((int(r["index"]), float(r["score"])) for r in rows)
    except ValueError as exc:
        raise DataError(f"bad value in {path}: {exc}") from None
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise DataError(f"{path} must list every index 0..n-1 exactly once")
    return np.array([s for _, s in pairs])


def cmd_eval(args) -> int:
    scores = _read_scores(Path(args.scores))
    dataset = load_csv(args.input, label_column=_label_column(args.label_column),
                       delimiter=args.delimiter, positive_label=args.positive_label)
    if dataset.labels is None:
        raise DataError("evaluation needs labels; pass --label-column")
    if len(scores) != dataset.n:
        raise DataError(f"{len(scores)} scores for {dataset.n} labeled points")
    curve = precision_recall_curve(scores, dataset.labels)
    print(f"AP {curve.ap!r}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "pr_curve.csv", ["threshold", "precision", "recall"],
                    ((repr(float(t)), repr(float(p)), repr(float(r)))
                     for t, p, r in zip(curve.thresholds, curve.precision, curve.recall)))
        _write_json(out / "eval.json", {
            "ap": curve.ap,
            "n": dataset.n,
            "positives": int(dataset.labels.sum()),
            "prevalence": float(dataset.labels.mean()),
        })
    return EXIT_OK


# --------------------------------------------------------------------------
# synthetic studies
# --------------------------------------------------------------------------


def cmd_synth_bv(args) -> int:
    spec = SyntheticBVSpec.from_json(args.spec) if args.spec else SyntheticBVSpec()
    if args.seed is not None or "CARE_SEED" in os.environ:
        spec = SyntheticBVSpec.from_dict({**spec.__dict__, "seed": _seed(args.seed)})
    procedures = [Procedure(p) for p in args.procedures] if args.procedures else list(Procedure)
    data = generate_bv_synthetic(spec)
    results = []
    for proc in procedures:
        log.info("running %s", proc.value)
        results.append(bias_variance_experiment(
            spec, proc, args.detector, args.k_values, args.rounds, data=data))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_bv_results(results, out / "bias_variance.csv", out / "bias_variance.json")
    for r in results:
        print(f"{r.procedure.value:<26} mean bias {r.bias.mean():.6f}  mean variance {r.variance.mean():.6f}")
    return EXIT_OK


def cmd_synth_error(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = _seed(args.seed)
    report = {}
    if args.study in ("estimation", "both"):
        spec = SyntheticDetectorSpec(n=args.n, outlier_fraction=args.outlier_fractions[0],
                                     true_errors=args.errors, trials=args.trials, seed=seed)
        study = error_estimation_study(spec, over=args.over)
        report["estimation"] = study.summary()
        print(f"mean |estimate - truth| {study.gaps.mean():.6f}  max {study.gaps.max():.6f}")
    if args.study in ("aggregation", "both"):
        report["aggregation"] = {}
        rows = []
        for frac in args.outlier_fractions:
            spec = SyntheticDetectorSpec(n=args.n, outlier_fraction=frac, true_errors=args.errors,
                                         trials=args.trials, seed=seed)
            acc = aggregation_study(spec)
            report["aggregation"][repr(frac)] = {
                "mean_accuracy": {k: float(v.mean()) for k, v in acc.items()},
                "p_pruned_over_weighted": sign_test(acc["pruned_weighted"], acc["weighted"]),
                "p_weighted_over_average": sign_test(acc["weighted"], acc["average"]),
            }
            for t in range(args.trials):
                rows.append([repr(frac), t] + [repr(float(acc[k][t])) for k in acc])
            print(f"outliers {frac:g}: " + "  ".join(f"{k} {v.mean():.4f}" for k, v in acc.items()))
        _write_rows(out / "aggregation_accuracy.csv",
                    ["outlier_fraction", "trial", "average", "weighted", "pruned_weighted"], rows)
    _write_json(out / "synth_error.json", report)
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def _data_flags(p, required=True):
    p.add_argument("--input", required=required, help="CSV data file")
    p.add_argument("--label-column", default=None,
                   help="label column: 0-based index, header name, or 'last'")
    p.add_argument("--positive-label", default=None,
                   help="text value of the label column that marks an outlier")
    p.add_argument("--delimiter", default=",")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="care", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="score a dataset with CARE or a baseline")
    _data_flags(p, required=False)
    p.add_argument("--detector", choices=["lof", "avgknn"], default="lof")
    p.add_argument("--mode", choices=MODES, default="care")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--bags", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=15)
    p.add_argument("--confidence", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=None, help="defaults to $CARE_SEED, then 0")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", default="care-out")
    p.add_argument("--verbose", action="store_true", help="log progress and dump error estimates")
    p.add_argument("--timings", action="store_true", help="add wall times to diagnostics")
    p.add_argument("--from-manifest", default=None, help="rerun the configuration of a manifest.json")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="average precision of a score file")
    p.add_argument("--scores", required=True, help="CSV with index,score columns")
    _data_flags(p)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-bv", help="bias/variance of the sampling procedures")
    p.add_argument("--spec", default=None, help="JSON file of generator settings")
    p.add_argument("--detector", choices=["lof", "avgknn"], default="lof")
    p.add_argument("--procedures", nargs="*", choices=[x.value for x in Procedure])
    p.add_argument("--k-values", type=int, nargs="+", default=list(DEFAULT_K))
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="care-bv")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_synth_bv)

    p = sub.add_parser("synth-error", help="error-estimation and aggregation studies")
    p.add_argument("--study", choices=["estimation", "aggregation", "both"], default="both")
    p.add_argument("--errors", type=float, nargs="+", default=[0.2, 0.4, 0.6, 0.8])
    p.add_argument("--outlier-fractions", type=float, nargs="+", default=[0.05, 0.1])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--over", choices=["union", "all"], default="union")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default="care-synth")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_synth_error)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
