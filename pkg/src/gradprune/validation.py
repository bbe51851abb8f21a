"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def check_sequences(X, n_features=None, seq_len=None):
    """Validate a batch of sequences, shape (n_samples, seq_len, n_features).

    Returns a float32 copy; raises ShapeError (a ValueError) otherwise.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 3:
        raise ShapeError(
            f"X must have shape (n_samples, seq_len, n_features), got {X.shape}"
        )
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ShapeError(f"X must be non-empty, got shape {X.shape}")
    if n_features is not None and X.shape[2] != n_features:
        raise ShapeError(f"X has {X.shape[2]} features, expected {n_features}")
    if seq_len is not None and X.shape[1] != seq_len:
        raise ShapeError(f"X has sequence length {X.shape[1]}, expected {seq_len}")
    if not np.isfinite(X).all():
        raise ShapeError("X contains non-finite values")
    return X


def check_regression_targets(y, n_samples):
    """Coerce y to (n_samples, k) float32; remembers if it came in 1-D."""
    y = np.asarray(y, dtype=np.float32)
    was_1d = y.ndim == 1
    if was_1d:
        y = y[:, None]
    if y.ndim != 2 or y.shape[0] != n_samples:
        raise ShapeError(
            f"y must have shape ({n_samples},) or ({n_samples}, k), got {y.shape}"
        )
    if not np.isfinite(y).all():
        raise ShapeError("y contains non-finite values")
    return y, was_1d


def check_class_targets(y, n_samples):
    """Map arbitrary labels to contiguous class indices."""
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ShapeError(f"y must have shape ({n_samples},), got {y.shape}")
    classes, indices = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise ShapeError("y must contain at least two classes")
    return classes, indices.astype(np.int64)
