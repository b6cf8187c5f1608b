"""Input checks shared by the estimators and the geometry helpers."""

import numpy as np
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

__all__ = ["as_points", "as_unit_vectors", "check_eps", "check_is_fitted",
           "check_positive", "NotFittedError"]


def as_points(x):
    """Float array whose last axis has length 3; rejects NaN and inf."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1:] != (3,):
        raise ValueError(f"expected points with 3 coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return arr


def as_unit_vectors(n, tol=1e-9):
    arr = as_points(n)
    nrm = np.linalg.norm(arr, axis=-1)
    if np.any(np.abs(nrm - 1.0) > tol):
        raise ValueError("directions must be unit vectors")
    return arr


def check_positive(value, name):
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return v


def check_eps(eps):
    return check_positive(eps, "eps")
