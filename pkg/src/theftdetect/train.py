"""Stratified k-fold training protocol.

Per fold: fit the quantile transform on training consumers only (leakage
guard asserted), build two-channel samples per the configured mask mode,
train with mini-batch Adam on cross-entropy, evaluate on the held-out fold
after every epoch, and keep the best-AUC epoch's parameters.
"""

import copy
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import model as M
from .estimators import HybridAttentionClassifier, ConvNetClassifier
from .metrics import build_report, roc_auc
from .preprocess import QuantileUniform, dataset_to_samples, values_matrix

__all__ = [
    "TrainConfig",
    "FoldResult",
    "stratified_kfold",
    "train_model",
    "evaluate",
    "run_training",
]

MASK_MODES = ("binary_mask", "zeros_only", "interpolated")


@dataclass
class TrainConfig:
    model: str = "hybrid"  # or "cnn"
    train_split: float = 0.8
    folds: int = 5
    epochs: int = 0  # 0 = architecture default (hybrid 20, cnn 100)
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    mask_mode: str = "binary_mask"
    normalize: str = "quantile"  # or "minmax" for tiny datasets

    def __post_init__(self):
        if self.model not in ("hybrid", "cnn"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")
        if not 0.0 < self.train_split < 1.0:
            raise ValueError("train_split must lie in (0, 1)")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.normalize not in ("quantile", "minmax"):
            raise ValueError(f"unknown normalize {self.normalize!r}")
        if self.epochs == 0:
            self.epochs = 20 if self.model == "hybrid" else 100


@dataclass
class FoldResult:
    fold: int
    train_losses: list
    val_aucs: list
    best_epoch: int
    report: "object"  # EvalReport of the best epoch
    params: "object" = field(repr=False, default=None)
    transform: "object" = field(repr=False, default=None)

    def log_records(self):
        return [
            {"epoch": e, "train_loss": l, "val_auc": a}
            for e, (l, a) in enumerate(zip(self.train_losses, self.val_aucs))
        ]


def stratified_kfold(labels, folds, seed):
    """Partition indices into folds preserving the class ratio.

    Returns a list of (train_idx, valid_idx) pairs; every sample lands in
    exactly one validation fold.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise ValueError("stratified_kfold needs both classes present")
    if folds > counts.min():
        raise ValueError(
            f"folds ({folds}) exceeds minority class count ({counts.min()})"
        )
    rng = np.random.default_rng(seed)
    assignment = np.empty(labels.size, dtype=np.int64)
    for c in classes:
        idx = np.nonzero(labels == c)[0]
        rng.shuffle(idx)
        for pos, i in enumerate(idx):
            assignment[i] = pos % folds
    out = []
    everything = np.arange(labels.size)
    for f in range(folds):
        valid = everything[assignment == f]
        train = everything[assignment != f]
        out.append((train, valid))
    return out


def _subsample_train(train_idx, labels, fraction, n_total, rng):
    """Stratified subsample of the training portion to fraction * n_total."""
    want = int(np.floor(fraction * n_total))
    if want >= train_idx.size:
        return train_idx
    keep = []
    for c in np.unique(labels[train_idx]):
        idx = train_idx[labels[train_idx] == c]
        idx = idx.copy()
        rng.shuffle(idx)
        take = int(round(want * idx.size / train_idx.size))
        keep.append(idx[:take])
    return np.sort(np.concatenate(keep))


class _MinMax:
    """Per-column min-max fallback for datasets too small for quantiles."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        self.lo_ = np.nanmin(X, axis=0)
        self.hi_ = np.nanmax(X, axis=0)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        span = np.where(self.hi_ > self.lo_, self.hi_ - self.lo_, 1.0)
        return np.clip((X - self.lo_) / span, 0.0, 1.0)


def _make_classifier(cfg, fold, callback):
    seed = cfg.seed + 1009 * (fold + 1)
    cls = HybridAttentionClassifier if cfg.model == "hybrid" else ConvNetClassifier
    return cls(
        epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, seed=seed,
        epoch_callback=callback,
    )


def _stack(samples):
    X = np.stack([s.channels() for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


def evaluate(clf, samples, threshold=0.5):
    """Score samples with a fitted classifier and build the full report."""
    X, y = _stack(samples)
    scores = clf.decision_scores(X)
    ks = [min(100, len(y)), min(200, len(y))]
    return build_report(scores, y, threshold=threshold, map_ks=sorted(set(ks)))


def _fit_transform(cfg, train_ds):
    if cfg.normalize == "minmax":
        t = _MinMax()
    else:
        t = QuantileUniform()
    t.fit(values_matrix(train_ds, cfg.mask_mode))
    return t


def _run_fold(cfg, ds, fold, train_idx, valid_idx):
    labels = ds.labels()
    rng = np.random.default_rng(cfg.seed + 7919 * (fold + 1))
    train_idx = _subsample_train(train_idx, labels, cfg.train_split, labels.size, rng)

    train_ds = ds.subset(train_idx)
    valid_ds = ds.subset(valid_idx)
    train_ids = {r.consumer_id for r in train_ds.records}
    valid_ids = {r.consumer_id for r in valid_ds.records}
    assert not train_ids & valid_ids, "transform fitted on validation consumers"

    transform = _fit_transform(cfg, train_ds)
    train_samples = dataset_to_samples(train_ds, cfg.mask_mode, transform)
    valid_samples = dataset_to_samples(valid_ds, cfg.mask_mode, transform)
    Xtr, ytr = _stack(train_samples)
    Xva, yva = _stack(valid_samples)

    val_aucs = []
    best = {"auc": -1.0, "epoch": -1, "params": None}

    def on_epoch(clf, epoch, loss):
        scores = clf.decision_scores(Xva)
        auc, _ = roc_auc(scores, yva)
        val_aucs.append(auc)
        if auc > best["auc"]:
            best.update(auc=auc, epoch=epoch, params=copy.deepcopy(clf.params_))

    clf = _make_classifier(cfg, fold, on_epoch)
    clf.fit(Xtr, ytr)
    clf.params_ = best["params"]
    report = evaluate(clf, valid_samples)
    return FoldResult(
        fold=fold,
        train_losses=clf.loss_history_,
        val_aucs=val_aucs,
        best_epoch=best["epoch"],
        report=report,
        params=best["params"],
        transform=transform,
    )


def train_model(ds, cfg, n_threads=1):
    """Run the full k-fold protocol; returns one FoldResult per fold."""
    labels = ds.labels()
    splits = stratified_kfold(labels, cfg.folds, cfg.seed)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = [
                pool.submit(_run_fold, cfg, ds, f, tr, va)
                for f, (tr, va) in enumerate(splits)
            ]
            return [f.result() for f in futures]
    return [_run_fold(cfg, ds, f, tr, va) for f, (tr, va) in enumerate(splits)]


def aggregate(results):
    """Mean metrics over folds, shaped like one block of the results table."""
    def mean(vals):
        return float(np.mean(vals))

    return {
        "auc": mean([r.report.auc for r in results]),
        "f1": mean([r.report.f1 for r in results]),
        "map@100": mean([r.report.map_at.get(100, 0.0) for r in results]),
        "map@200": mean([r.report.map_at.get(200, 0.0) for r in results]),
        "best_epochs": [r.best_epoch for r in results],
    }


def run_training(ds, cfg, out_dir, n_threads=1):
    """Train and persist the run: config, per-fold logs, checkpoints, report."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(cfg), fh, indent=1, sort_keys=True)
    results = train_model(ds, cfg, n_threads=n_threads)
    for r in results:
        with open(
            os.path.join(out_dir, f"fold{r.fold}_log.json"), "w", encoding="utf-8"
        ) as fh:
            json.dump(r.log_records(), fh, indent=1)
        M.save_checkpoint(r.params, os.path.join(out_dir, f"fold{r.fold}_best.bin"))
        r.report.save_json(os.path.join(out_dir, f"fold{r.fold}_report.json"))
        if isinstance(r.transform, QuantileUniform):
            r.transform.save(os.path.join(out_dir, f"fold{r.fold}_quantile.json"))
    agg = aggregate(results)
    with open(os.path.join(out_dir, "aggregate.json"), "w", encoding="utf-8") as fh:
        json.dump(agg, fh, indent=1, sort_keys=True)
    return results, agg
