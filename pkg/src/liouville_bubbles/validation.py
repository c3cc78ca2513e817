"""Input validation helpers shared by the estimators and operations."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import ValidationError


def check_point(x, name: str = "point") -> np.ndarray:
    """Return ``x`` as a finite float array of shape (2,)."""
    arr = np.asarray(x, dtype=float)
    if arr.shape != (2,):
        raise ValidationError(f"{name} must have shape (2,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


def check_points(X, name: str = "points", allow_single: bool = True) -> np.ndarray:
    """Return ``X`` as a finite float array of shape (k, 2).

    A single point of shape (2,) is promoted to (1, 2) when ``allow_single``.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and allow_single:
        arr = arr[None, :]
    try:
        arr = check_array(arr, ensure_2d=True, dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{name}: {exc}") from exc
    if arr.shape[1] != 2:
        raise ValidationError(f"{name} must have two columns, got {arr.shape[1]}")
    return arr


def check_point_cloud(X, name: str = "points") -> np.ndarray:
    """Return ``X`` as a finite float array of shape (..., 2), any leading shape."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ValidationError(f"{name} must have trailing dimension 2, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


def check_vector(v, name: str, length: int | None = None, positive: bool = False) -> np.ndarray:
    """Return ``v`` as a finite 1-D float array, optionally of fixed length and positive."""
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if length is not None and arr.shape[0] != length:
        raise ValidationError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    if positive and np.any(arr <= 0):
        raise ValidationError(f"{name} must be strictly positive")
    return arr


def check_positive_scalar(value, name: str) -> float:
    """Return ``value`` as a positive finite float."""
    try:
        out = float(value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} must be a real number") from exc
    if not np.isfinite(out) or out <= 0:
        raise ValidationError(f"{name} must be positive and finite, got {value!r}")
    return out
