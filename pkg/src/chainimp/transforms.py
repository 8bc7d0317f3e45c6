"""Symmetrizing transform for amounts and skewness screening."""

from __future__ import annotations

import numpy as np
import pandas as pd


def signed_cube_root(x):
    """sign(x) * |x|**(1/3); defined for negative and zero amounts."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("signed_cube_root requires finite input")
    out = np.cbrt(arr)
    return float(out) if out.ndim == 0 else out


def inverse_cube(y):
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("inverse_cube requires finite input")
    with np.errstate(over="ignore"):
        out = arr**3
    if not np.all(np.isfinite(out)):
        raise OverflowError("inverse_cube overflowed")
    return float(out) if out.ndim == 0 else out


def forward(transform: str, x):
    return signed_cube_root(x) if transform == "cube-root" else np.asarray(x, dtype=float)


def inverse(transform: str, y):
    return inverse_cube(y) if transform == "cube-root" else np.asarray(y, dtype=float)


def forward_bounds(transform: str, lower: np.ndarray, upper: np.ndarray):
    """Map brackets through a monotone transform; infinite ends stay infinite."""
    if transform != "cube-root":
        return lower, upper
    return np.cbrt(lower), np.cbrt(upper)


def skewness(xs) -> float:
    """Sample skewness g1 = m3 / m2**1.5 from central moments."""
    x = np.asarray(xs, dtype=float)
    if x.size < 3:
        raise ValueError("skewness needs at least 3 values")
    d = x - x.mean()
    m2 = np.mean(d**2)
    if m2 <= 0:
        raise ValueError("skewness of a constant sample is undefined")
    return float(np.mean(d**3) / m2**1.5)


def skew_report(columns: dict[str, np.ndarray], threshold: float = 1.0) -> pd.DataFrame:
    """Raw vs cube-root skewness per column; flags |raw skew| > threshold.

    Columns that are too short or constant are reported with NaN.
    """
    rows = []
    for name, values in columns.items():
        x = np.asarray(values, dtype=float)
        x = x[np.isfinite(x)]
        try:
            raw, cube = skewness(x), skewness(np.cbrt(x))
        except ValueError:
            raw = cube = float("nan")
        rows.append({"variable": name, "skew_raw": raw, "skew_cube_root": cube,
                     "transform_candidate": bool(abs(raw) > threshold)})
    return pd.DataFrame(rows)
