"""Input validation helpers.

All converters return float64 ndarrays and raise :class:`DimensionError` /
:class:`ParameterDomainError` with the offending name in the message, so
callers can pass user-facing field names through.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterDomainError


def as_matrix(value, rows: int | None, cols: int | None, name: str) -> np.ndarray:
    """Coerce to a 2-D float array, optionally enforcing each dimension."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D array, got ndim={arr.ndim}")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionError(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ParameterDomainError(f"{name} contains non-finite entries")
    return arr


def as_vector(value, size: int | None, name: str, allow_inf: bool = False) -> np.ndarray:
    """Coerce to a 1-D float array of the given size."""
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be a 1-D array, got ndim={arr.ndim}")
    if size is not None and arr.shape[0] != size:
        raise DimensionError(f"{name} must have length {size}, got {arr.shape[0]}")
    if allow_inf:
        if np.any(np.isnan(arr)):
            raise ParameterDomainError(f"{name} contains NaN entries")
    elif not np.all(np.isfinite(arr)):
        raise ParameterDomainError(f"{name} contains non-finite entries")
    return arr


def check_symmetric(mat: np.ndarray, name: str, rtol: float = 1e-10) -> None:
    """Reject matrices whose relative asymmetry exceeds ``rtol``."""
    scale = max(float(np.max(np.abs(mat))), 1.0)
    gap = float(np.max(np.abs(mat - mat.T))) if mat.size else 0.0
    if gap > rtol * scale:
        raise ParameterDomainError(
            f"{name} must be symmetric; max asymmetry {gap:.3e} exceeds {rtol:.1e} relative"
        )


def check_spd(mat: np.ndarray, name: str) -> None:
    """Reject matrices that are not symmetric positive definite."""
    check_symmetric(mat, name)
    try:
        np.linalg.cholesky(0.5 * (mat + mat.T))
    except np.linalg.LinAlgError:
        raise ParameterDomainError(f"{name} must be positive definite") from None


def check_measurement_block(y: np.ndarray, m: int, name: str = "measurements") -> np.ndarray:
    """Coerce a measurement sequence to shape (N, m)."""
    arr = np.asarray(y, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if m == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != m:
        raise DimensionError(f"{name} must have shape (N, {m}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterDomainError(f"{name} contains non-finite entries")
    return arr
