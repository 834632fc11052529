"""Input validation helpers shared by the estimators."""

import numpy as np

__all__ = ["check_inputs", "check_labels"]


def check_inputs(X):
    """Validate a (n, 2, weeks, 7) float batch; returns it as float64."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4 or X.shape[1] != 2 or X.shape[3] != 7:
        raise ValueError(f"expected inputs of shape (n, 2, weeks, 7), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite values")
    return X


def check_labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    y = y.astype(np.int64)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (normal) or 1 (thief)")
    return y
