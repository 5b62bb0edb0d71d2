"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def check_images(X) -> np.ndarray:
    """Validate a batch of raw images: N x C x H x W, finite, C in {1, 3}."""
    X = np.asarray(X)
    if X.ndim != 4:
        raise DataError(f"expected images of shape N x C x H x W, got {X.shape}")
    if X.shape[0] == 0:
        raise DataError("empty image batch")
    if X.shape[1] not in (1, 3):
        raise DataError(f"expected 1 or 3 channels, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise DataError("images contain NaN or Inf")
    return X


def check_labels(y, n_samples: int) -> np.ndarray:
    """Validate integer class labels aligned with the sample count."""
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_samples:
        raise DataError(f"labels must be 1-D of length {n_samples}, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        rounded = np.rint(y)
        if not np.allclose(y, rounded):
            raise DataError("labels must be integers")
        y = rounded
    return y.astype(np.int64)


def check_is_fitted(estimator, attribute: str = "graph_") -> None:
    if not hasattr(estimator, attribute):
        raise DataError(
            f"{type(estimator).__name__} is not fitted yet; call fit before predicting"
        )
