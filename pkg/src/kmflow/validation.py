"""Input validation helpers.

These are thin wrappers in the spirit of :func:`sklearn.utils.check_array`:
they coerce to ``float64`` numpy arrays, reject non-finite entries and raise
the package's own exception types so callers can catch them uniformly.
"""

import numbers

import numpy as np

from .exceptions import DimensionError, SpecError


def check_vector(x, dim=None, name="x"):
    """Return `x` as a finite 1-D float64 array, optionally of length `dim`."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} must have at least one coordinate")
    if not np.all(np.isfinite(arr)):
        raise SpecError(f"{name} contains NaN or infinite entries")
    if dim is not None and arr.size != dim:
        raise DimensionError(f"{name} has dimension {arr.size}, expected {dim}")
    return arr


def check_matrix(m, shape=None, square=False, name="matrix"):
    """Return `m` as a finite 2-D float64 array."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1 and arr.size == 1:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SpecError(f"{name} contains NaN or infinite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_scalar(value, name, low=None, high=None, low_open=False, high_open=False):
    """Validate a finite real scalar against an optional interval."""
    if isinstance(value, bool) or not isinstance(value, (numbers.Real, np.floating, np.integer)):
        raise SpecError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise SpecError(f"{name} must be finite, got {value}")
    if low is not None and (value <= low if low_open else value < low):
        bracket = "(" if low_open else "["
        raise SpecError(f"{name}={value} is outside {bracket}{low}, {high if high is not None else 'inf'}"
                        f"{')' if high_open or high is None else ']'}")
    if high is not None and (value >= high if high_open else value > high):
        bracket = "(" if low_open else "["
        raise SpecError(f"{name}={value} is outside {bracket}{low if low is not None else '-inf'}, {high}"
                        f"{')' if high_open else ']'}")
    return value


def frozen(arr):
    """Return a read-only copy of `arr`."""
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out
