"""Finite-dimensional real inner-product space primitives.

Points of the Hilbert space are plain ``float64`` numpy arrays of shape
``(dim,)``; :func:`as_vector` is the single gatekeeper for that invariant.
"""

import numpy as np

from .exceptions import DimensionError
from .validation import check_vector


def as_vector(x, dim=None):
    """Coerce `x` to a finite 1-D float array (optionally of length `dim`)."""
    return check_vector(x, dim=dim)


def _pair(x, y):
    x = as_vector(x)
    y = as_vector(y)
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.size} vs {y.size}")
    return x, y


def inner(x, y):
    """Euclidean inner product of two vectors of equal dimension."""
    x, y = _pair(x, y)
    return float(np.dot(x, y))


def norm(x):
    """Euclidean norm."""
    return float(np.linalg.norm(as_vector(x)))


def distance(x, y):
    x, y = _pair(x, y)
    return float(np.linalg.norm(x - y))


def convex_identity_residual(alpha, x, y):
    """Absolute defect of the convex-combination identity

    ``||a x + (1-a) y||^2 + a (1-a) ||x - y||^2 = a ||x||^2 + (1-a) ||y||^2``

    which holds for every real ``a``.  The return value is zero up to rounding
    and is used as a floating-point self-check.
    """
    x, y = _pair(x, y)
    a = float(alpha)
    lhs = np.sum((a * x + (1.0 - a) * y) ** 2) + a * (1.0 - a) * np.sum((x - y) ** 2)
    rhs = a * np.sum(x ** 2) + (1.0 - a) * np.sum(y ** 2)
    return float(abs(lhs - rhs))
