"""Input validation helpers used by the estimators and the low-level API."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInputError


def check_vector(x, name: str, n: Optional[int] = None, dtype=np.float64) -> np.ndarray:
    """Coerce to a 1-d contiguous array, checking length and finiteness."""
    arr = np.ascontiguousarray(x, dtype=dtype)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInputError(f"{name} has no rows")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"{name} contains a non-finite value at index {bad}")
    return arr


def check_matrix(x, name: str, n: Optional[int] = None) -> np.ndarray:
    """Coerce to a 2-d float array (n, q); 1-d input becomes a single column."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyInputError(f"{name} has no rows")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has {arr.shape[0]} rows, expected {n}")
    if not np.all(np.isfinite(arr)):
        r, c = np.argwhere(~np.isfinite(arr))[0]
        raise ValueError(f"{name} contains a non-finite value at row {r}, column {c}")
    return np.ascontiguousarray(arr)


def check_positive_scalar(value, name: str) -> float:
    v = float(value)
    if not np.isfinite(v) or v <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return v


def check_unit_interval(value, name: str, *, open_left: bool = True,
                        closed_right: bool = True) -> float:
    v = float(value)
    lo_ok = v > 0.0 if open_left else v >= 0.0
    hi_ok = v <= 1.0 if closed_right else v < 1.0
    if not (np.isfinite(v) and lo_ok and hi_ok):
        raise ValueError(f"{name} must lie in the unit interval, got {value!r}")
    return v


def check_probability_simplex(weights, name: str, p: int) -> np.ndarray:
    w = check_vector(weights, name, n=p)
    if np.any(w < 0):
        raise ValueError(f"{name} must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValueError(f"{name} must have positive total weight")
    return w / total


def resolve_column_indices(cols: Optional[Sequence], column_names: Sequence[str],
                           name: str) -> list[int]:
    """Map a mix of column names and integer positions onto positions."""
    if cols is None:
        return []
    out = []
    lookup = {c: i for i, c in enumerate(column_names)}
    for c in cols:
        if isinstance(c, (int, np.integer)) and not isinstance(c, bool):
            idx = int(c)
            if not 0 <= idx < len(column_names):
                raise ValueError(f"{name}: column index {idx} out of range")
            out.append(idx)
        elif c in lookup:
            out.append(lookup[c])
        else:
            raise ValueError(f"{name}: unknown column {c!r}")
    return out
