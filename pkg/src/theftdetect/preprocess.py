"""Turn consumer records into two-channel weekly matrices.

Pipeline order: missing-value mask first, Monday-aligned weekly reshape
second, quantile-uniform normalization last. Masked (missing) cells and
calendar padding cells carry value 0 and mask 1 throughout; 0 is also the
transform's minimum, so missingness is never confused with high consumption.
"""

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

__all__ = [
    "Sample2D",
    "FitError",
    "QuantileUniform",
    "build_mask",
    "reshape_weekly",
    "record_to_sample",
    "interpolate_baseline",
    "values_matrix",
    "dataset_to_samples",
]


class FitError(ValueError):
    """Not enough data to fit a transform."""


@dataclass
class Sample2D:
    """Model-ready sample: values and mask, both weeks x 7."""

    consumer_id: str
    label: int
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape:
            raise ValueError(
                f"values shape {self.values.shape} != mask shape {self.mask.shape}"
            )

    def channels(self):
        """Stack (values, mask) into a (2, weeks, 7) array."""
        return np.stack([self.values, self.mask])


def build_mask(readings):
    """Split a reading sequence into zero-filled values and a binary mask.

    Mask is 1 exactly where the reading is missing (NaN); values carry 0
    there and the original reading elsewhere.
    """
    readings = np.asarray(readings, dtype=np.float64)
    mask = np.isnan(readings).astype(np.float64)
    values = np.where(mask == 1.0, 0.0, readings)
    return values, mask


def reshape_weekly(seq, start_date, pad_value=0.0):
    """Reshape a daily sequence into Monday-aligned calendar weeks.

    Returns (matrix, pad) where ``matrix`` is weeks x 7 and ``pad`` is 1 at
    the leading/trailing cells that fall outside the window.
    """
    seq = np.asarray(seq, dtype=np.float64)
    lead = start_date.weekday()  # Monday == 0
    total = lead + len(seq)
    weeks = -(-total // 7)
    flat = np.full(weeks * 7, pad_value, dtype=np.float64)
    flat[lead : lead + len(seq)] = seq
    pad = np.ones(weeks * 7, dtype=np.float64)
    pad[lead : lead + len(seq)] = 0.0
    return flat.reshape(weeks, 7), pad.reshape(weeks, 7)


def record_to_sample(rec, start_date):
    """ConsumerRecord -> un-normalized Sample2D (mask covers calendar pads)."""
    values_1d, mask_1d = build_mask(rec.readings)
    values, pad = reshape_weekly(values_1d, start_date)
    mask, _ = reshape_weekly(mask_1d, start_date, pad_value=0.0)
    mask = np.maximum(mask, pad)
    return Sample2D(rec.consumer_id, rec.label, values, mask)


class QuantileUniform(BaseEstimator, TransformerMixin):
    """Per-feature quantile map onto [0, 1].

    Fits ``n_quantiles`` evenly spaced empirical quantile landmarks per
    daily column, over present values only, and transforms by piecewise
    linear interpolation between them. Needs at least ``10 * n_quantiles``
    present samples per feature.
    """

    def __init__(self, n_quantiles=10):
        self.n_quantiles = n_quantiles

    def fit(self, X, y=None):
        """Fit landmarks. X: (n_consumers, n_features) with NaN = missing."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"expected 2D array, got shape {X.shape}")
        m = self.n_quantiles
        probs = np.linspace(0.0, 1.0, m)
        landmarks = np.empty((X.shape[1], m))
        for j in range(X.shape[1]):
            col = X[:, j]
            present = col[~np.isnan(col)]
            if present.size < 10 * m:
                raise FitError(
                    f"feature {j}: {present.size} present samples, "
                    f"need at least {10 * m}"
                )
            landmarks[j] = np.quantile(present, probs)
        self.landmarks_ = landmarks
        self.n_features_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "landmarks_"):
            raise RuntimeError("QuantileUniform is not fitted")

    def transform_column(self, j, values):
        """Transform raw values of feature ``j`` to [0, 1]."""
        self._check_fitted()
        lm = self.landmarks_[j]
        probs = np.linspace(0.0, 1.0, self.n_quantiles)
        return np.interp(np.asarray(values, dtype=np.float64), lm, probs)

    def transform(self, X):
        """Transform an (n, n_features) array; NaNs pass through as NaN."""
        self._check_fitted()
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.n_features_:
            raise ValueError(
                f"expected {self.n_features_} features, got {X.shape[1]}"
            )
        out = np.empty_like(X)
        nan = np.isnan(X)
        for j in range(X.shape[1]):
            out[:, j] = self.transform_column(j, np.where(nan[:, j], 0.0, X[:, j]))
        out[nan] = np.nan
        return out

    def transform_sample(self, sample, start_date):
        """Apply the fitted map to a Sample2D, leaving masked cells at 0.

        The sample's weekly grid is unrolled back to daily feature columns
        using the window start date, so column j of the fit corresponds to
        day j of the window.
        """
        self._check_fitted()
        lead = start_date.weekday()
        flat_v = sample.values.reshape(-1)
        flat_m = sample.mask.reshape(-1)
        out = np.zeros_like(flat_v)
        for pos in np.nonzero(flat_m == 0.0)[0]:
            j = pos - lead
            out[pos] = self.transform_column(j, flat_v[pos])
        return Sample2D(
            sample.consumer_id,
            sample.label,
            out.reshape(sample.values.shape),
            sample.mask.copy(),
        )

    def save(self, path):
        self._check_fitted()
        doc = {
            "n_quantiles": self.n_quantiles,
            "landmarks": self.landmarks_.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        t = cls(n_quantiles=doc["n_quantiles"])
        t.landmarks_ = np.asarray(doc["landmarks"], dtype=np.float64)
        t.n_features_ = t.landmarks_.shape[0]
        return t


def interpolate_baseline(rec):
    """Reconstruct missing readings the way the comparison pipeline does.

    An isolated missing value between two present neighbours becomes their
    average; longer runs and boundary gaps become 0. Values above
    mean + 3*std of the originally present readings are clipped to that cap.
    """
    from .dataio import ConsumerRecord

    x = rec.readings.copy()
    miss = np.isnan(x)
    filled = x.copy()
    n = len(x)
    for i in np.nonzero(miss)[0]:
        left_ok = i > 0 and not miss[i - 1]
        right_ok = i < n - 1 and not miss[i + 1]
        if left_ok and right_ok:
            filled[i] = 0.5 * (x[i - 1] + x[i + 1])
        else:
            filled[i] = 0.0
    present = x[~miss]
    if present.size >= 2:
        cap = present.mean() + 3.0 * present.std()
        filled = np.minimum(filled, cap)
    return ConsumerRecord(rec.consumer_id, rec.label, filled)


def values_matrix(ds, mode="binary_mask"):
    """Stack a dataset's readings into (n_consumers, n_days), NaN = missing.

    In 'interpolated' mode the missing values are reconstructed first, so
    the result has no NaNs (this is also the matrix a QuantileUniform for
    that mode should be fitted on).
    """
    if mode == "interpolated":
        return np.stack([interpolate_baseline(r).readings for r in ds.records])
    return np.stack([r.readings for r in ds.records])


def dataset_to_samples(ds, mode="binary_mask", transform=None):
    """Build model inputs for a whole dataset.

    mode 'binary_mask': channels are (values, missing+pad mask).
    mode 'zeros_only': same value channel, second channel all zeros.
    mode 'interpolated': missing values reconstructed first, zero channel.
    A fitted QuantileUniform, when given, normalizes the value channel
    column by column before the weekly reshape.
    """
    if mode not in ("binary_mask", "zeros_only", "interpolated"):
        raise ValueError(f"unknown mask mode {mode!r}")
    vm = values_matrix(ds, mode)
    nan = np.isnan(vm)
    if transform is not None:
        vm = transform.transform(vm)
    vm = np.where(nan, np.nan, vm)
    samples = []
    for rec, row in zip(ds.records, vm):
        values_1d, mask_1d = build_mask(row)
        values, pad = reshape_weekly(values_1d, ds.start_date)
        mask, _ = reshape_weekly(mask_1d, ds.start_date)
        mask = np.maximum(mask, pad)
        if mode != "binary_mask":
            mask = np.zeros_like(mask)
        samples.append(Sample2D(rec.consumer_id, rec.label, values, mask))
    return samples
