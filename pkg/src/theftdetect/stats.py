"""Data diagnostics: KL divergence, moments, KPSS, autocorrelation,
day-of-week correlation.

All functions are pure; KPSS over many columns can safely run in parallel.
"""

from dataclasses import dataclass, asdict

import numpy as np

__all__ = [
    "Histogram",
    "DistSummary",
    "kl_divergence",
    "moments",
    "kpss_level",
    "autocorrelation",
    "dayofweek_correlation",
    "distribution_summary",
]

KPSS_CRIT_5PCT = 0.463  # level-stationarity critical value at alpha = 0.05


@dataclass
class Histogram:
    """Normalized histogram: counts sum to 1 over uniform bins."""

    edges: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_data(cls, xs, bins=100, range_=None):
        xs = np.asarray(xs, dtype=np.float64)
        xs = xs[~np.isnan(xs)]
        counts, edges = np.histogram(xs, bins=bins, range=range_)
        total = counts.sum()
        probs = counts / total if total else np.zeros_like(counts, dtype=np.float64)
        return cls(edges, probs)


@dataclass
class DistSummary:
    min: float
    max: float
    mean: float
    std: float
    skewness: float
    kurtosis: float  # excess
    d_kl_to_uniform: float
    kpss_true_count: int
    kpss_false_count: int

    def to_dict(self):
        return asdict(self)


def kl_divergence(p, q, eps=1e-12):
    """KL divergence D(p||q) in nats between two same-binned histograms.

    Bins with p=0 contribute 0; q is smoothed by eps before the ratio.
    """
    if p.probs.shape != q.probs.shape or not np.allclose(p.edges, q.edges):
        raise ValueError("histograms must share binning")
    pv = p.probs
    qv = np.maximum(q.probs, eps)
    nz = pv > 0
    return float(np.sum(pv[nz] * np.log(pv[nz] / qv[nz])))


def moments(xs):
    """(mean, std, skewness, excess kurtosis) with population denominators.

    A constant sequence reports skewness and kurtosis of 0.
    """
    xs = np.asarray(xs, dtype=np.float64)
    xs = xs[~np.isnan(xs)]
    if xs.size < 2:
        raise ValueError(f"moments needs at least 2 values, got {xs.size}")
    mu = xs.mean()
    c = xs - mu
    var = (c * c).mean()
    std = np.sqrt(var)
    if std == 0.0:
        return float(mu), 0.0, 0.0, 0.0
    skew = float((c**3).mean() / std**3)
    kurt = float((c**4).mean() / var**2 - 3.0)
    return float(mu), float(std), skew, kurt


def kpss_level(xs, alpha=0.05):
    """KPSS level-stationarity test.

    Returns (statistic, stationary). Long-run variance uses Bartlett weights
    with lag = floor(4 * (T/100)^(1/4)); stationary means the statistic is
    below the 5% critical value 0.463. Missing entries are dropped first.
    """
    if alpha != 0.05:
        raise ValueError("only alpha = 0.05 is supported")
    xs = np.asarray(xs, dtype=np.float64)
    xs = xs[~np.isnan(xs)]
    T = xs.size
    if T < 10:
        raise ValueError(f"kpss_level needs at least 10 present values, got {T}")
    e = xs - xs.mean()
    if np.all(e == 0.0):
        return 0.0, True
    S = np.cumsum(e)
    lag = int(4 * (T / 100.0) ** 0.25)
    lrv = float(e @ e) / T
    for h in range(1, lag + 1):
        w = 1.0 - h / (lag + 1.0)
        lrv += 2.0 * w * float(e[h:] @ e[:-h]) / T
    stat = float(S @ S) / (T * T * lrv)
    return stat, stat < KPSS_CRIT_5PCT


def autocorrelation(xs, max_lag):
    """Autocorrelation at lags 0..max_lag; missing values mean-imputed.

    A zero-variance series reports 1 at lag 0 and 0 elsewhere.
    """
    xs = np.asarray(xs, dtype=np.float64)
    miss = np.isnan(xs)
    if miss.any():
        xs = xs.copy()
        present = xs[~miss]
        xs[miss] = present.mean() if present.size else 0.0
    T = xs.size
    if T <= max_lag:
        raise ValueError(f"series of length {T} too short for max_lag {max_lag}")
    c = xs - xs.mean()
    denom = float(c @ c)
    acf = np.zeros(max_lag + 1)
    acf[0] = 1.0
    if denom == 0.0:
        return acf
    for k in range(1, max_lag + 1):
        acf[k] = float(c[:-k] @ c[k:]) / denom
    return acf


def dayofweek_correlation(ds, class_label):
    """7x7 Pearson correlation of per-weekday consumption totals.

    Each consumer of the class contributes a 7-vector of consumption totals
    per weekday (Monday..Sunday, present readings only); the matrix
    correlates those totals across consumers.
    """
    recs = [r for r in ds.records if r.label == class_label]
    if not recs:
        raise ValueError(f"no consumers with label {class_label}")
    start_dow = ds.start_date.weekday()
    n_days = ds.n_days
    dows = (start_dow + np.arange(n_days)) % 7
    totals = np.zeros((len(recs), 7))
    for i, rec in enumerate(recs):
        vals = rec.readings
        for d in range(7):
            sel = vals[dows == d]
            totals[i, d] = np.nansum(sel)
    corr = np.corrcoef(totals, rowvar=False)
    np.fill_diagonal(corr, 1.0)
    return corr


def distribution_summary(values, kpss_columns=None, hist_range=None, bins=100):
    """Summarize a value pool the way the diagnostics report does.

    ``values``: flat array (NaNs ignored) pooled over all cells.
    ``kpss_columns``: optional iterable of per-day series; columns with
    fewer than 10 present values are skipped.
    """
    flat = np.asarray(values, dtype=np.float64).ravel()
    flat = flat[~np.isnan(flat)]
    mean, std, skew, kurt = moments(flat)
    if hist_range is None:
        hist_range = (float(flat.min()), float(flat.max()))
    p = Histogram.from_data(flat, bins=bins, range_=hist_range)
    q = Histogram(p.edges, np.full_like(p.probs, 1.0 / p.probs.size))
    dkl = kl_divergence(p, q)
    kpss_true = kpss_false = 0
    if kpss_columns is not None:
        for col in kpss_columns:
            col = np.asarray(col, dtype=np.float64)
            if np.count_nonzero(~np.isnan(col)) < 10:
                continue
            _, stationary = kpss_level(col)
            if stationary:
                kpss_true += 1
            else:
                kpss_false += 1
    return DistSummary(
        min=float(flat.min()),
        max=float(flat.max()),
        mean=mean,
        std=std,
        skewness=skew,
        kurtosis=kurt,
        d_kl_to_uniform=dkl,
        kpss_true_count=kpss_true,
        kpss_false_count=kpss_false,
    )
