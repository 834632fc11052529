"""Command-line surface: synth, analyze, preprocess, train, evaluate.

Every command is deterministic given its resolved configuration, writes the
resolved configuration into its output directory, and reports failures on
stderr with a greppable ``E_<KIND>:`` prefix and a nonzero exit code.
"""

import argparse
import configparser
import json
import os
import sys

import numpy as np

from . import model as M
from .dataio import LoadError, SynthConfig, generate_synthetic, load_csv, write_csv
from .estimators import ConvNetClassifier, HybridAttentionClassifier
from .metrics import MetricError
from .preprocess import FitError, QuantileUniform, dataset_to_samples, values_matrix
from .stats import autocorrelation, dayofweek_correlation, distribution_summary
from .train import TrainConfig, evaluate, run_training

__all__ = ["main"]


def _fail(kind, message):
    print(f"E_{kind}: {message}", file=sys.stderr)
    raise SystemExit(1)


def _write_resolved_config(out_dir, args):
    os.makedirs(out_dir, exist_ok=True)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=1, sort_keys=True, default=str)


def _load_dataset(path):
    try:
        return load_csv(path)
    except FileNotFoundError:
        _fail("IO", f"dataset not found: {path}")
    except LoadError as e:
        _fail("INPUT", str(e))


def cmd_synth(args):
    cfg = SynthConfig(
        n_consumers=args.n,
        thief_fraction=args.thief_fraction,
        missing_fraction=args.missing,
        seed=args.seed,
        n_days=args.days,
    )
    ds = generate_synthetic(cfg)
    try:
        write_csv(ds, args.out)
    except OSError as e:
        _fail("IO", f"cannot write {args.out}: {e}")
    labels = ds.labels()
    print(f"wrote {args.out}")
    print(f"consumers: {len(ds.records)} "
          f"(normal {int((labels == 0).sum())}, thief {int((labels == 1).sum())})")
    print(f"thief fraction: {labels.mean():.4f}")
    print(f"missing rate: {ds.missing_rate():.4f}")
    print(f"window: {ds.start_date} .. {ds.end_date} ({ds.n_days} days)")


def cmd_analyze(args):
    ds = _load_dataset(args.data)
    _write_resolved_config(args.out, args)
    raw = values_matrix(ds)
    try:
        transform = QuantileUniform().fit(raw)
    except FitError as e:
        _fail("INPUT", f"cannot fit quantile transform: {e}")
    processed = transform.transform(raw)

    def summary(matrix, range_):
        cols = [matrix[:, j] for j in range(matrix.shape[1])]
        return distribution_summary(matrix, kpss_columns=cols, hist_range=range_)

    report = {
        "raw": summary(raw, None).to_dict(),
        "processed": summary(processed, (0.0, 1.0)).to_dict(),
        "dayofweek_correlation": {},
        "mean_autocorrelation": {},
    }
    for name, label in (("normal", 0), ("thief", 1)):
        try:
            corr = dayofweek_correlation(ds, label)
        except ValueError:
            continue
        report["dayofweek_correlation"][name] = corr.tolist()
        max_lag = min(args.max_lag, ds.n_days - 1)
        acfs = [
            autocorrelation(r.readings, max_lag)
            for r in ds.records
            if r.label == label
        ]
        report["mean_autocorrelation"][name] = (
            np.mean(acfs, axis=0).tolist() if acfs else []
        )
    path = os.path.join(args.out, "analysis.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    print(f"wrote {path}")
    print(f"raw skewness: {report['raw']['skewness']:.2f}, "
          f"processed skewness: {report['processed']['skewness']:.2f}")


def cmd_preprocess(args):
    ds = _load_dataset(args.data)
    _write_resolved_config(args.out, args)
    try:
        transform = QuantileUniform().fit(values_matrix(ds, args.mask_mode))
    except FitError as e:
        _fail("INPUT", f"cannot fit quantile transform: {e}")
    samples = dataset_to_samples(ds, args.mask_mode, transform)
    transform.save(os.path.join(args.out, "quantile.json"))
    np.savez(
        os.path.join(args.out, "samples.npz"),
        inputs=np.stack([s.channels() for s in samples]),
        labels=np.array([s.label for s in samples], dtype=np.int64),
    )
    with open(os.path.join(args.out, "samples_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "consumer_ids": [s.consumer_id for s in samples],
                "shape": [len(samples), 2] + list(samples[0].values.shape),
                "mask_mode": args.mask_mode,
            },
            fh, indent=1,
        )
    print(f"wrote {args.out}/samples.npz ({len(samples)} samples, "
          f"{samples[0].values.shape[0]} weeks)")


def cmd_train(args):
    ds = _load_dataset(args.data)
    try:
        cfg = TrainConfig(
            model=args.model,
            train_split=args.split,
            folds=args.folds,
            epochs=args.epochs,
            batch_size=args.batch_size,
            lr=args.lr,
            seed=args.seed,
            mask_mode=args.mask_mode,
            normalize=args.normalize,
        )
    except ValueError as e:
        _fail("USAGE", str(e))
    _write_resolved_config(args.out, args)
    try:
        results, agg = run_training(ds, cfg, args.out, n_threads=args.threads)
    except (ValueError, FitError) as e:
        _fail("INPUT", str(e))
    print(f"model={cfg.model} mask_mode={cfg.mask_mode} split={cfg.train_split} "
          f"folds={cfg.folds} epochs={cfg.epochs}")
    header = ["metric"] + [f"fold{r.fold}" for r in results] + ["mean"]
    rows = [
        ("AUC", [r.report.auc for r in results], agg["auc"]),
        ("F1", [r.report.f1 for r in results], agg["f1"]),
        ("MAP@100", [r.report.map_at.get(100, 0.0) for r in results], agg["map@100"]),
        ("MAP@200", [r.report.map_at.get(200, 0.0) for r in results], agg["map@200"]),
    ]
    print("  ".join(f"{h:>8}" for h in header))
    for name, vals, mean in rows:
        cells = [f"{v:8.3f}" for v in vals] + [f"{mean:8.3f}"]
        print(f"{name:>8}  " + "  ".join(cells))
    print(f"run artifacts in {args.out}")


def cmd_evaluate(args):
    ds = _load_dataset(args.data)
    _write_resolved_config(args.out, args)
    if args.transform:
        try:
            transform = QuantileUniform.load(args.transform)
        except (OSError, KeyError, ValueError) as e:
            _fail("IO", f"cannot load transform {args.transform}: {e}")
    else:
        try:
            transform = QuantileUniform().fit(values_matrix(ds, args.mask_mode))
        except FitError as e:
            _fail("INPUT", f"cannot fit quantile transform: {e}")
    samples = dataset_to_samples(ds, args.mask_mode, transform)
    weeks = samples[0].values.shape[0]
    cls = HybridAttentionClassifier if args.model == "hybrid" else ConvNetClassifier
    clf = cls(seed=args.seed)
    clf.params_ = (
        M.init_hybrid(0, weeks) if args.model == "hybrid" else M.init_cnn(0, weeks)
    )
    try:
        M.load_checkpoint(clf.params_, args.checkpoint)
    except FileNotFoundError:
        _fail("IO", f"checkpoint not found: {args.checkpoint}")
    except M.CheckpointError as e:
        _fail("CHECKPOINT", str(e))
    try:
        report = evaluate(clf, samples)
    except MetricError as e:
        _fail("INPUT", str(e))
    report.save_json(os.path.join(args.out, "report.json"))
    report.save_roc_csv(os.path.join(args.out, "roc.csv"))
    report.save_sweep_csv(os.path.join(args.out, "sweep.csv"))
    print(f"AUC {report.auc:.4f}  F1@0.5 {report.f1:.4f}")
    print(f"best F1 threshold: {report.best_threshold:.2f}")
    print(f"report files in {args.out}")


_CONFIG_SECTIONS = ("global", "synth", "analyze", "preprocess", "train", "evaluate")


def _apply_config_file(parser, sub, args, argv):
    """Overlay [global] + [<command>] sections under explicit CLI flags."""
    cp = configparser.ConfigParser()
    read = cp.read(args.config)
    if not read:
        _fail("IO", f"config file not found: {args.config}")
    valid_dests = {a.dest for a in sub._actions}
    explicit = {
        tok.lstrip("-").replace("-", "_").split("=")[0]
        for tok in argv
        if tok.startswith("--")
    }
    for section in cp.sections():
        if section not in _CONFIG_SECTIONS:
            _fail("USAGE", f"unknown config section [{section}]")
        if section not in ("global", args.command):
            continue
        for key, value in cp.items(section):
            dest = key.replace("-", "_")
            if dest not in valid_dests:
                _fail("USAGE", f"unknown config key {key!r} in [{section}]")
            if dest in explicit:
                continue
            current = getattr(args, dest, None)
            caster = type(current) if current is not None else str
            if caster is bool:
                value = value.lower() in ("1", "true", "yes")
            else:
                try:
                    value = caster(value)
                except ValueError:
                    _fail("USAGE", f"config key {key!r}: cannot parse {value!r}")
            setattr(args, dest, value)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="theftdetect",
        description="Electricity-theft detection pipeline: data synthesis, "
        "diagnostics, training, and evaluation.",
    )
    parser.add_argument("--config", help="INI config file with [global]/[command] sections")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("synth", help="generate a labeled synthetic dataset CSV")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--thief-fraction", type=float, default=0.0855)
    p.add_argument("--missing", type=float, default=0.25)
    p.add_argument("--days", type=int, default=168)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="distribution/stationarity diagnostics report")
    p.add_argument("--data", required=True)
    p.add_argument("--max-lag", type=int, default=30)
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("preprocess", help="emit transformed model inputs")
    p.add_argument("--data", required=True)
    p.add_argument("--mask-mode", default="binary_mask",
                   choices=["binary_mask", "zeros_only", "interpolated"])
    common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="stratified k-fold training run")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="hybrid", choices=["hybrid", "cnn"])
    p.add_argument("--mask-mode", default="binary_mask",
                   choices=["binary_mask", "zeros_only", "interpolated"])
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--normalize", default="quantile", choices=["quantile", "minmax"])
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--model", default="hybrid", choices=["hybrid", "cnn"])
    p.add_argument("--mask-mode", default="binary_mask",
                   choices=["binary_mask", "zeros_only", "interpolated"])
    p.add_argument("--transform", help="fitted quantile landmarks JSON")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    return parser, sub


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        _apply_config_file(parser, sub.choices[args.command], args, argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
