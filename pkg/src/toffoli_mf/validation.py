"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_series(x, name="series", min_length=1) -> np.ndarray:
    """Coerce to a finite 1-d float array of at least min_length samples."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if x.size < min_length:
        raise ValueError(f"{name} must have at least {min_length} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_power_of_two(n, name="n") -> int:
    n = int(n)
    if n < 2 or n & (n - 1):
        raise ValueError(f"{name} must be a power of two, got {n}")
    return n


def check_ascending(grid, name="grid") -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ValueError(f"{name} must be a nonempty finite 1-d array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError(f"{name} must be strictly ascending")
    return grid
