"""Input checks shared by the estimators and array-level helpers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .records import RAW_MAX, RAW_MIN


def check_raw_triples(X, *, allow_zero: bool = True) -> np.ndarray:
    """Return ``X`` as an ``(n, 3)`` int64 array of raw counts or raise ``ValueError``."""
    arr = check_array(X, dtype=None, ensure_2d=True, ensure_min_samples=1)
    if arr.shape[1] != 3:
        raise ValueError(f"expected 3 columns (x, y, z), got {arr.shape[1]}")
    if arr.dtype.kind == "f":
        if not np.all(np.equal(np.floor(arr), arr)):
            raise ValueError("raw counts must be integers")
    elif arr.dtype.kind not in "iu":
        raise ValueError(f"raw counts must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.min() < RAW_MIN or arr.max() > RAW_MAX:
        raise ValueError(f"raw counts must lie in [{RAW_MIN}, {RAW_MAX}]")
    if not allow_zero:
        zero = np.flatnonzero(~arr.any(axis=1))
        if len(zero):
            raise ValueError(f"row {int(zero[0])} has zero magnitude")
    return arr


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not value > 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value
