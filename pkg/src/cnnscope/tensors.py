"""Dense tensor transforms shared by every view builder.

Weight tensors are [w, w, c, f] (window, window, channels, filters) and
activation tensors are [b, m, m, f] (batch, map, map, filters), row-major
float64 throughout the analytics path.
"""

from __future__ import annotations

import numpy as np


def as_float_array(data, ndim: int, name: str = "tensor") -> np.ndarray:
    """Coerce to a float64 ndarray of the given rank and reject non-finite values."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have rank {ndim}, got rank {arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def batch_sum(acts) -> np.ndarray:
    """Sum activations over the batch axis, pixel by pixel: [b,m,m,f] -> [m,m,f]."""
    acts = as_float_array(acts, 4, "activations")
    if acts.shape[0] == 0:
        raise ValueError("empty batch")
    return acts.sum(axis=0)


def flatten_window(summed, k: int) -> np.ndarray:
    """Row-major flattening of the m x m plane of filter k in a [m,m,f] tensor."""
    summed = as_float_array(summed, 3, "summed activations")
    f = summed.shape[2]
    if not 0 <= k < f:
        raise IndexError(f"filter index {k} out of range for {f} filters")
    return summed[:, :, k].ravel()


def normalize_unit(v, max_abs: float) -> np.ndarray:
    """Scale a non-negative vector into [0, 1] by dividing by max_abs."""
    v = as_float_array(v, 1, "vector")
    if max_abs <= 0:
        raise ValueError("degenerate scale")
    return v / max_abs
