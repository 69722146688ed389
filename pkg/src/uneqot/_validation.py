"""Input validation shared by the solvers and estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import ConfigurationError


def as_points(x, dim: int) -> np.ndarray:
    """Coerce ``x`` to a finite float array of shape ``(N, dim)``.

    A scalar or 1-D array is read as one point when ``dim > 1`` and as ``N``
    points when ``dim == 1``.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None] if dim == 1 else arr[None, :]
    arr = check_array(arr, dtype=float, ensure_all_finite=True, ensure_min_samples=1)
    if arr.shape[1] != dim:
        raise ConfigurationError(f"expected points of dimension {dim}, got {arr.shape[1]}")
    return arr


def check_positive(name: str, value: float) -> float:
    value = float(value)
    if not (np.isfinite(value) and value > 0.0):
        raise ConfigurationError(f"{name} must be positive and finite, got {value}")
    return value


def check_interval(interval) -> tuple:
    try:
        lo, hi = (float(v) for v in interval)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"interval must be a pair of reals, got {interval!r}") from exc
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise ConfigurationError(f"interval must satisfy lo < hi, got {interval!r}")
    return lo, hi
