from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kmflow import DimensionError
from kmflow.space import as_vector, convex_identity_residual, distance, inner, norm

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def pairs(max_dim=16):
    return st.integers(1, max_dim).flatmap(
        lambda n: st.tuples(arrays(np.float64, n, elements=finite), arrays(np.float64, n, elements=finite)))


@pytest.mark.parametrize("x, y, expected", [
    ((1, 0), (0, 1), 0.0),
    ((1, 2), (1, 2), 5.0),
    ((0.5, -0.5), (2, 2), 0.0),
])
def test_inner_examples(x, y, expected):
    assert inner(x, y) == expected


@pytest.mark.parametrize("x, expected", [((0, 0, 0), 0.0), ((3, 4), 5.0), ((1, 1), 1.41421356)])
def test_norm_examples(x, expected):
    assert norm(x) == pytest.approx(expected, abs=1e-8)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        inner([1, 2], [1, 2, 3])
    with pytest.raises(DimensionError):
        convex_identity_residual(0.5, [1], [1, 2])


def test_vectors_must_be_finite():
    with pytest.raises(ValueError):
        as_vector([1.0, np.nan])
    with pytest.raises(ValueError):
        as_vector([])


def test_distance():
    assert distance([1, 1], [4, 5]) == 5.0


def test_convex_identity_examples():
    assert convex_identity_residual(0.5, [1, 0], [0, 1]) <= 1e-12
    assert convex_identity_residual(1.0, [0.3, -7.1], [2.2, 9.0]) == 0.0
    assert convex_identity_residual(-2.0, [1, 2], [3, -1]) <= 1e-10


def test_convex_identity_in_exact_arithmetic():
    # the identity is exact over the rationals; compare the two sides by hand
    a = Fraction(-2)
    x, y = [Fraction(1), Fraction(2)], [Fraction(3), Fraction(-1)]
    sq = lambda v: sum(c * c for c in v)  # noqa: E731
    lhs = sq([a * p + (1 - a) * q for p, q in zip(x, y)]) + a * (1 - a) * sq([p - q for p, q in zip(x, y)])
    rhs = a * sq(x) + (1 - a) * sq(y)
    assert lhs == rhs
    assert convex_identity_residual(-2.0, [1, 2], [3, -1]) == pytest.approx(float(abs(lhs - rhs)), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(pairs())
def test_cauchy_schwarz(xy):
    x, y = xy
    assert abs(inner(x, y)) <= norm(x) * norm(y) + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), pairs())
def test_convex_identity_property(alpha, xy):
    x, y = xy
    assert convex_identity_residual(alpha, x, y) <= 1e-9 * (1 + norm(x) ** 2 + norm(y) ** 2)


@given(pairs())
def test_inner_symmetric(xy):
    x, y = xy
    assert inner(x, y) == inner(y, x)
