"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_float_array(a, name="array"):
    """Coerce to a float64 ndarray, rejecting NaN/Inf."""
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_square(m, name="matrix"):
    m = as_float_array(m, name)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    return m


def check_symmetric(m, tol=1e-12, name="matrix"):
    """Validate symmetry to relative tolerance and return (m + m.T)/2."""
    m = check_square(m, name)
    scale = max(1.0, float(np.abs(m).max()) if m.size else 1.0)
    gap = float(np.abs(m - m.T).max()) if m.size else 0.0
    if gap > tol * scale:
        raise ValueError(
            f"{name} is not symmetric: max asymmetry {gap:.3e} exceeds "
            f"{tol:.1e} * scale"
        )
    return (m + m.T) / 2.0


def check_dims(dims):
    """Validate a tuple of positive mode sizes."""
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise ValueError("dims must be non-empty")
    if any(d <= 0 for d in dims):
        raise ValueError(f"dims must be positive, got {dims}")
    return dims


def check_mode(mode, n_modes):
    mode = int(mode)
    if not 0 <= mode < n_modes:
        raise ValueError(f"mode {mode} out of range for {n_modes} modes")
    return mode
