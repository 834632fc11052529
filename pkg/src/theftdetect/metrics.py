"""Evaluation metrics: ROC/AUC, F1, MAP@K, confusion counts, threshold sweep."""

import csv
import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EvalReport",
    "MetricError",
    "roc_auc",
    "f1_confusion",
    "map_at_k",
    "threshold_sweep",
    "build_report",
]


class MetricError(ValueError):
    """Metric undefined for this input (e.g. a single class present)."""


@dataclass
class EvalReport:
    auc: float
    f1: float
    precision: float
    recall: float
    confusion: dict  # tp, fp, tn, fn
    map_at: dict  # {K: value}
    roc_points: list  # (fpr, tpr)
    sweep: list  # (threshold, f1, precision, recall)
    best_threshold: float

    def to_dict(self):
        return {
            "auc": self.auc,
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "confusion": self.confusion,
            "map_at": {str(k): v for k, v in self.map_at.items()},
            "roc_points": [list(p) for p in self.roc_points],
            "sweep": [list(s) for s in self.sweep],
            "best_threshold": self.best_threshold,
        }

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def save_roc_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fpr", "tpr"])
            w.writerows(self.roc_points)

    def save_sweep_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "f1", "precision", "recall"])
            w.writerows(self.sweep)


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} must be equal-length 1D")
    return scores, labels


def roc_auc(scores, labels):
    """(auc, roc_points) by sweeping thresholds over grouped unique scores.

    Equal scores are grouped, which makes the trapezoidal area equal to the
    Mann-Whitney statistic with half credit for ties.
    """
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("roc_auc needs both classes present")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < y.size:
        j = i
        while j < y.size and s[j] == s[i]:
            j += 1
        tp += int(y[i:j].sum())
        fp += j - i - int(y[i:j].sum())
        points.append((fp / n_neg, tp / n_pos))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return float(auc), points


def f1_confusion(scores, labels, threshold=0.5):
    """(f1, precision, recall, confusion) predicting thief iff score >= t.

    Undefined precision/recall ratios are taken as 0.
    """
    scores, labels = _check(scores, labels)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return f1, precision, recall, {"tp": tp, "fp": fp, "tn": tn, "fn": fn}


def map_at_k(scores, labels, k):
    """Mean average precision over the top-k scored consumers.

    Ranking is by descending score, ties broken by ascending original index.
    Returns 0 when the top k contain no positives.
    """
    scores, labels = _check(scores, labels)
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, scores.size)
    order = np.argsort(-scores, kind="stable")[:k]
    r = labels[order]
    hits = np.cumsum(r)
    total = int(hits[-1])
    if total == 0:
        return 0.0
    prec_at_hit = hits[r == 1] / (np.nonzero(r == 1)[0] + 1)
    return float(prec_at_hit.sum() / total)


def threshold_sweep(scores, labels, step=0.01):
    """F1/precision/recall on the threshold grid {0, step, ..., 1}.

    Returns (sweep, best_threshold); ties in F1 resolve to the smallest
    threshold.
    """
    if not 0.0 < step < 1.0:
        raise ValueError("step must lie in (0, 1)")
    n = int(round(1.0 / step))
    sweep = []
    best_t, best_f1 = 0.0, -1.0
    for i in range(n + 1):
        t = i * step
        f1, p, r, _ = f1_confusion(scores, labels, t)
        sweep.append((t, f1, p, r))
        if f1 > best_f1:
            best_f1, best_t = f1, t
    return sweep, best_t


def build_report(scores, labels, threshold=0.5, map_ks=(100, 200)):
    """Assemble the full EvalReport at the given decision threshold."""
    auc, points = roc_auc(scores, labels)
    f1, precision, recall, confusion = f1_confusion(scores, labels, threshold)
    sweep, best_t = threshold_sweep(scores, labels)
    map_at = {int(k): map_at_k(scores, labels, k) for k in map_ks}
    return EvalReport(
        auc=auc,
        f1=f1,
        precision=precision,
        recall=recall,
        confusion=confusion,
        map_at=map_at,
        roc_points=points,
        sweep=sweep,
        best_threshold=best_t,
    )
