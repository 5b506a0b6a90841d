import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from inexact_dr.hilbert import (DimensionError, PairPoint, as_vector, inner, lambda_inner,
                                lambda_norm, pair_distance)


@pytest.mark.parametrize("u, w, expected", [
    ((1, 0), (0, 1), 0.0),
    ((2,), (3,), 6.0),
    ((1, 2, 3), (1, 2, 3), 14.0),
])
def test_inner_examples(u, w, expected):
    assert inner(u, w) == expected


def test_inner_dimension_mismatch_names_both():
    with pytest.raises(DimensionError, match="2 vs 3"):
        inner([1, 2], [1, 2, 3])


@pytest.mark.parametrize("lam, p, q, expected", [
    (2.0, ((1,), (1,)), ((1,), (1,)), 5.0),
    (1.0, ((1, 0), (0, 0)), ((0, 1), (0, 0)), 0.0),
    (0.5, ((0,), (2,)), ((0,), (2,)), 1.0),
])
def test_lambda_inner_examples(lam, p, q, expected):
    assert lambda_inner(PairPoint(*p, lam), PairPoint(*q, lam)) == pytest.approx(expected, abs=1e-15)


def test_lambda_inner_rejects_mixed_weights():
    with pytest.raises(DimensionError, match="lambda"):
        lambda_inner(PairPoint([1.0], [1.0], 1.0), PairPoint([1.0], [1.0], 2.0))


@pytest.mark.parametrize("lam, x, v, expected", [
    (1.0, (3,), (4,), 5.0),
    (2.0, (0,), (1,), 2.0),
    (1.0, (0, 0), (0, 0), 0.0),
])
def test_lambda_norm_examples(lam, x, v, expected):
    assert lambda_norm(PairPoint(x, v, lam)) == pytest.approx(expected, abs=1e-15)


def test_pair_point_validation():
    with pytest.raises(DimensionError):
        PairPoint([1.0, 2.0], [1.0], 1.0)
    with pytest.raises(ValueError):
        PairPoint([1.0], [1.0], 0.0)
    with pytest.raises(ValueError):
        as_vector([1.0, float("nan")])


def test_vectors_are_read_only_copies():
    src = np.array([1.0, 2.0])
    p = PairPoint(src, src, 1.0)
    src[0] = 99.0
    assert p.x[0] == 1.0
    with pytest.raises(ValueError):
        p.x[0] = 3.0


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
lams = st.floats(1e-2, 1e2)


@st.composite
def pair_points(draw, n=None, lam=None):
    n = n if n is not None else draw(st.integers(1, 6))
    lam = lam if lam is not None else draw(lams)
    x = draw(arrays(np.float64, n, elements=finite))
    v = draw(arrays(np.float64, n, elements=finite))
    return PairPoint(x, v, lam)


@st.composite
def two_pairs(draw):
    n = draw(st.integers(1, 6))
    lam = draw(lams)
    return draw(pair_points(n, lam)), draw(pair_points(n, lam))


@settings(max_examples=200, deadline=None)
@given(two_pairs())
def test_cauchy_schwarz(pq):
    p, q = pq
    lhs = abs(lambda_inner(p, q))
    rhs = lambda_norm(p) * lambda_norm(q)
    assert lhs <= rhs * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(two_pairs())
def test_triangle_inequality(pq):
    p, q = pq
    assert lambda_norm(p + q) <= (lambda_norm(p) + lambda_norm(q)) * (1 + 1e-12) + 1e-12


@settings(max_examples=100, deadline=None)
@given(two_pairs())
def test_reduces_to_inner_when_second_component_zero(pq):
    p, q = pq
    p0 = PairPoint(p.x, np.zeros_like(p.v), p.lam)
    q0 = PairPoint(q.x, np.zeros_like(q.v), q.lam)
    assert lambda_inner(p0, q0) == inner(p.x, q.x)


@settings(max_examples=100, deadline=None)
@given(two_pairs())
def test_pair_distance_matches_lambda_norm(pq):
    p, q = pq
    assert math.isclose(pair_distance(p.x, p.v, q.x, q.v, p.lam), lambda_norm(p - q),
                        rel_tol=1e-12, abs_tol=1e-12)
