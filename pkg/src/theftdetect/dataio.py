"""Dataset ingestion and synthetic data generation.

The on-disk format is a wide CSV: header ``CONS_NO,FLAG,<iso dates...>``,
one row per consumer, one column per calendar day. Empty cells or a literal
``NaN`` mark missing readings.
"""

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

__all__ = [
    "ConsumerRecord",
    "Dataset",
    "SynthConfig",
    "LoadError",
    "load_csv",
    "write_csv",
    "generate_synthetic",
]


class LoadError(ValueError):
    """Malformed input file; the message carries the offending row number."""


@dataclass
class ConsumerRecord:
    """One consumer's daily readings over the study window.

    ``readings`` holds NaN at missing days; present readings are >= 0.
    """

    consumer_id: str
    label: int  # 0 normal, 1 thief
    readings: np.ndarray  # float64, NaN = missing

    def missing_mask(self):
        return np.isnan(self.readings)

    def n_missing(self):
        return int(np.isnan(self.readings).sum())


@dataclass
class Dataset:
    records: list
    start_date: date
    end_date: date

    @property
    def dates(self):
        n = (self.end_date - self.start_date).days + 1
        return [self.start_date + timedelta(days=i) for i in range(n)]

    @property
    def n_days(self):
        return (self.end_date - self.start_date).days + 1

    def labels(self):
        return np.array([r.label for r in self.records], dtype=np.int64)

    def missing_rate(self):
        total = len(self.records) * self.n_days
        miss = sum(r.n_missing() for r in self.records)
        return miss / total

    def subset(self, indices):
        return Dataset([self.records[i] for i in indices], self.start_date, self.end_date)


@dataclass
class SynthConfig:
    """Knobs for the labeled synthetic generator.

    Defaults mirror the public dataset's class balance (8.55% thieves) and
    missing-data rate (25%). Thieves suppress consumption after a random
    onset day and accrue clustered extra missingness afterwards (missing not
    at random); normal consumers lose readings completely at random.
    """

    n_consumers: int = 1000
    thief_fraction: float = 0.0855
    missing_fraction: float = 0.25
    seed: int = 0
    n_days: int = 168
    start_date: date = date(2014, 1, 6)  # a Monday
    weekly_amplitude: float = 0.6
    noise_scale: float = 0.25
    theft_onset_range: tuple = (0.2, 0.6)
    suppression: float = 0.8
    thief_missing_boost: float = 1.8
    zero_day_rate: float = 0.02

    def __post_init__(self):
        if not (0.0 <= self.thief_fraction <= 1.0 and 0.0 <= self.missing_fraction <= 1.0):
            raise ValueError("fractions must lie in [0, 1]")
        if self.n_consumers < 10:
            raise ValueError("n_consumers must be >= 10")


def _parse_cell(cell, row_no):
    cell = cell.strip()
    if cell == "" or cell.lower() == "nan":
        return math.nan
    try:
        v = float(cell)
    except ValueError:
        raise LoadError(f"row {row_no}: non-numeric reading {cell!r}") from None
    if v < 0:
        raise LoadError(f"row {row_no}: negative reading {v}")
    return v


def load_csv(path):
    """Read a wide-format consumption CSV into a Dataset."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError("row 1: empty file") from None
        if len(header) < 3 or header[0] != "CONS_NO" or header[1] != "FLAG":
            raise LoadError("row 1: header must start with CONS_NO,FLAG followed by dates")
        try:
            dates = [date.fromisoformat(c) for c in header[2:]]
        except ValueError as e:
            raise LoadError(f"row 1: unparsable date ({e})") from None
        for a, b in zip(dates, dates[1:]):
            if (b - a).days != 1:
                raise LoadError(f"row 1: dates must be consecutive ascending days, {a} -> {b}")
        records = []
        seen = set()
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise LoadError(
                    f"row {row_no}: expected {len(header)} cells, got {len(row)}"
                )
            cid = row[0].strip()
            if cid in seen:
                raise LoadError(f"row {row_no}: duplicate consumer id {cid!r}")
            seen.add(cid)
            flag = row[1].strip()
            if flag not in ("0", "1"):
                raise LoadError(f"row {row_no}: FLAG must be 0 or 1, got {flag!r}")
            readings = np.array(
                [_parse_cell(c, row_no) for c in row[2:]], dtype=np.float64
            )
            records.append(ConsumerRecord(cid, int(flag), readings))
    return Dataset(records, dates[0], dates[-1])


def write_csv(ds, path):
    """Write a Dataset in the same wide format load_csv reads."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["CONS_NO", "FLAG"] + [d.isoformat() for d in ds.dates])
        for rec in ds.records:
            cells = ["" if math.isnan(v) else repr(float(v)) for v in rec.readings]
            writer.writerow([rec.consumer_id, str(rec.label)] + cells)


def _mark_runs(rng, mark, start, end, coverage):
    """Mark clustered runs (length 3 + geometric) covering ``coverage`` of
    the span [start, end) in expectation."""
    coverage = min(max(coverage, 0.0), 0.95)
    if coverage == 0.0 or end <= start:
        return
    mean_run = 5.0  # 3 + mean of geometric(0.5)
    q = coverage / (mean_run * (1.0 - coverage) + coverage)
    t = start
    while t < end:
        if rng.random() < q:
            run = 3 + rng.geometric(0.5)
            mark[t : min(t + run, end)] = True
            t += run
        else:
            t += 1


def generate_synthetic(cfg):
    """Generate a labeled Dataset with a plantable theft signature.

    Normal consumers: personal base level, personal weekday profile, noise,
    genuine zero-consumption runs (vacancies), readings missing completely
    at random. Thieves: a shared weekday profile, and after a random onset
    day the signal is scaled down and extra missingness arrives in clusters
    (missing not at random). The vacancy coverage for normal consumers is
    solved so both classes show the same expected zero rate once missing
    readings are zero-filled; only the recorded-vs-missing distinction
    separates thief gaps from genuine vacancies. The per-class missing
    rates are solved so the overall expected rate hits
    ``cfg.missing_fraction``.
    """
    rng = np.random.default_rng(cfg.seed)
    n_thief = round(cfg.n_consumers * cfg.thief_fraction)
    labels = np.array([1] * n_thief + [0] * (cfg.n_consumers - n_thief))
    rng.shuffle(labels)

    days = np.arange(cfg.n_days)
    dow = (np.array([cfg.start_date.weekday()]) + days) % 7
    thief_profile = np.array([0.95, 1.0, 0.9, 1.05, 1.0, 1.25, 1.3])

    # Solve the baseline MCAR rate so the overall expectation matches.
    lo, hi = cfg.theft_onset_range
    post_frac = 1.0 - (lo + hi) / 2.0
    r_hi = min(0.9, cfg.missing_fraction * cfg.thief_missing_boost)
    p_t = n_thief / cfg.n_consumers
    denom = (1 - p_t) + p_t * (1 - post_frac)
    r0 = (cfg.missing_fraction - p_t * post_frac * r_hi) / denom
    r0 = min(max(r0, 0.0), 1.0)
    # post-onset clustered coverage lifting thieves from r0 to r_hi, and the
    # whole-window vacancy coverage that gives normals the same expected
    # zero-filled rate
    cluster_cov = max(r_hi - r0, 0.0) / max(1.0 - r0, 1e-9)
    vacancy = post_frac * cluster_cov

    records = []
    width = len(str(cfg.n_consumers))
    for i in range(cfg.n_consumers):
        base = rng.uniform(4.0, 12.0)
        if labels[i] == 1:
            profile = thief_profile
        else:
            profile = 1.0 + cfg.weekly_amplitude * rng.normal(size=7) * 0.5
            profile = np.clip(profile, 0.2, None)
        signal = base * (
            1.0 + cfg.weekly_amplitude * (profile[dow] - profile.mean())
        )
        signal = signal + rng.normal(scale=cfg.noise_scale * base, size=cfg.n_days)
        signal = np.clip(signal, 0.0, None)
        # genuine scattered zero-consumption days for everyone
        signal[rng.random(cfg.n_days) < cfg.zero_day_rate] = 0.0

        miss = rng.random(cfg.n_days) < r0
        if labels[i] == 1:
            onset = int(rng.uniform(lo, hi) * cfg.n_days)
            signal[onset:] *= cfg.suppression
            _mark_runs(rng, miss, onset, cfg.n_days, cluster_cov)
        else:
            vac = np.zeros(cfg.n_days, dtype=bool)
            _mark_runs(rng, vac, 0, cfg.n_days, vacancy)
            signal[vac] = 0.0
        vals = signal.copy()
        vals[miss] = np.nan
        records.append(
            ConsumerRecord(f"C{str(i).zfill(width)}", int(labels[i]), vals)
        )
    end = cfg.start_date + timedelta(days=cfg.n_days - 1)
    return Dataset(records, cfg.start_date, end)
