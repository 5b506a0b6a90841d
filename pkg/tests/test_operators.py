import numpy as np
import pytest

from conftest import operator_zoo
from inexact_dr import operators as ops
from inexact_dr.operators import (GraphPair, ResolventNonconvergence, membership_residual,
                                  monotonicity_probe, resolve)


def bisect_l1_inclusion(z, lam, w=1.0, lo=-10.0, hi=10.0, iters=200):
    """Root of x + lam*w*sign(x) - z, i.e. the point where 0 in x + lam*w*d|x| - z."""
    f = lambda x: x - z + lam * w * np.sign(x)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_resolve_scaled_identity_example():
    x, v = resolve(ops.scaled_identity(1.0), 1.0, np.array([2.0]))
    assert x[0] == 1.0 and v[0] == 1.0


def test_resolve_l1_example_against_bisection():
    x, v = resolve(ops.subdiff_l1(1.0), 1.0, np.array([0.5]))
    x_oracle = bisect_l1_inclusion(0.5, 1.0)
    assert abs(x_oracle) < 1e-12
    assert x[0] == 0.0 and v[0] == 0.5
    assert -1.0 <= v[0] <= 1.0


@pytest.mark.parametrize("z", [-3.0, -1.2, -0.3, 0.0, 0.7, 2.5])
def test_l1_resolvent_matches_bisection(z):
    x, _ = resolve(ops.subdiff_l1(0.8), 1.5, np.array([z]))
    assert x[0] == pytest.approx(bisect_l1_inclusion(z, 1.5, 0.8), abs=1e-10)


def test_resolve_box_example():
    x, v = resolve(ops.normal_cone_box(0.0, 1.0), 2.0, np.array([3.0]))
    assert x[0] == 1.0 and v[0] == 1.0


def test_membership_examples():
    assert membership_residual(ops.scaled_identity(2.0), ([1.0], [2.0])) == 0.0
    # oracle: distance from 2 to the interval [-1, 1] via projection
    proj = np.clip(2.0, -1.0, 1.0)
    assert membership_residual(ops.subdiff_l1(1.0), ([0.0], [2.0])) == pytest.approx(abs(2.0 - proj))
    assert membership_residual(ops.normal_cone_box(0, 1), ([0.5], [0.0])) == 0.0


def test_membership_outside_domain_is_infinite():
    assert membership_residual(ops.normal_cone_box(0, 1), ([1.5], [0.0])) == np.inf


def test_box_boundary_cone():
    box = ops.normal_cone_box(0.0, 1.0)
    assert membership_residual(box, ([1.0], [0.5])) == 0.0
    assert membership_residual(box, ([1.0], [-0.5])) == 0.5
    assert membership_residual(box, ([0.0], [-3.0])) == 0.0


def test_monotonicity_probe_examples():
    assert monotonicity_probe(ops.scaled_identity(1.0), [([0.0], [0.0]), ([1.0], [1.0])]) == 1.0
    assert monotonicity_probe(ops.zero(1), [([0.0], [0.0]), ([5.0], [0.0]), ([-2.0], [0.0])]) == 0.0
    l1 = ops.subdiff_l1(1.0)
    pairs = [([-1.0], [-1.0]), ([1.0], [1.0])]
    assert all(membership_residual(l1, p) == 0.0 for p in pairs)
    assert monotonicity_probe(l1, pairs) == 4.0


def test_monotonicity_probe_needs_two_pairs():
    with pytest.raises(ValueError, match="at least 2"):
        monotonicity_probe(ops.zero(1), [([0.0], [0.0])])


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind", ops.KINDS)
def test_resolvent_properties(kind, seed):
    op = operator_zoo(n=4, seed=seed)[kind]
    rng = np.random.default_rng(100 + seed)
    lam = float(rng.uniform(0.1, 5))
    pairs = []
    for _ in range(8):
        z = 3 * rng.standard_normal(op.dim)
        x, v = resolve(op, lam, z)
        assert np.linalg.norm(x + lam * v - z) <= 1e-10 * (1 + np.linalg.norm(z))
        assert membership_residual(op, (x, v)) <= 1e-9 * (1 + np.linalg.norm(x) + np.linalg.norm(v))
        pairs.append((x, v, z))
    # firm nonexpansiveness of the resolvent
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            dx = pairs[i][0] - pairs[j][0]
            dz = pairs[i][2] - pairs[j][2]
            assert dx @ dx <= dx @ dz + 1e-9 * (1 + dz @ dz)
    assert monotonicity_probe(op, [GraphPair(x, v) for x, v, _ in pairs]) >= -1e-10


@pytest.mark.parametrize("kind", ["normal_cone_box", "normal_cone_halfspace", "normal_cone_affine"])
def test_projection_variational_inequality(kind):
    """x = P_C(z) iff <z - x, y - x> <= 0 for all y in C; y sampled as other projections."""
    op = operator_zoo(n=4, seed=7)[kind]
    rng = np.random.default_rng(3)
    for _ in range(20):
        z = 3 * rng.standard_normal(4)
        x, _ = resolve(op, 1.0, z)
        for _ in range(20):
            y, _ = resolve(op, 1.0, 5 * rng.standard_normal(4))
            assert (z - x) @ (y - x) <= 1e-9 * (1 + np.linalg.norm(z))


def test_sum_shift_shifts_values():
    inner = ops.scaled_identity(2.0)
    op = ops.sum_shift(inner, [1.0])
    x, v = resolve(op, 1.0, np.array([4.0]))
    # x + (2x + 1) = 4
    assert x[0] == pytest.approx(1.0) and v[0] == pytest.approx(3.0)
    assert membership_residual(op, (x, v)) == pytest.approx(0.0, abs=1e-15)


def test_iterative_path_matches_direct(monkeypatch):
    rng = np.random.default_rng(11)
    M = rng.standard_normal((6, 6))
    M = M.T @ M / 6 + (M - M.T)
    op = ops.affine_monotone(M, rng.standard_normal(6))
    z = rng.standard_normal(6)
    x_direct, _ = resolve(op, 0.7, z)
    monkeypatch.setattr(ops, "DIRECT_SOLVE_MAX_DIM", 0)
    x_it, v_it = resolve(op, 0.7, z, tol=1e-10)
    assert np.linalg.norm(x_it + 0.7 * v_it - z) <= 1e-10
    assert membership_residual(op, (x_it, v_it)) <= 1e-12
    assert np.allclose(x_it, x_direct, atol=1e-9)


def test_iterative_nonconvergence_reports_residual():
    K = np.diag([1.0, 100.0, 1e4])
    with pytest.raises(ResolventNonconvergence) as info:
        ops._iterative_solve(K + np.triu(np.ones((3, 3)), 1), np.ones(3), 1e-300, max_iter=1)
    assert info.value.residual > 1e-300


def test_construction_invariants():
    with pytest.raises(ops.OperatorError, match="positive semidefinite"):
        ops.affine_monotone([[-1.0]])
    with pytest.raises(ops.OperatorError, match="lo > hi"):
        ops.normal_cone_box([0.0, 2.0], [1.0, 1.0])
    with pytest.raises(ops.OperatorError, match="symmetric"):
        ops.quadratic_gradient([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ops.UnsupportedKindError):
        ops.from_dict({"kind": "banana"})
    # semidefinite within floating point noise is accepted
    ops.affine_monotone([[0.0, 1.0], [-1.0, 0.0]])


@pytest.mark.parametrize("kind", ops.KINDS)
def test_dict_round_trip(kind):
    op = operator_zoo(n=3, seed=2)[kind]
    again = ops.from_dict(op.to_dict())
    z = np.array([0.3, -1.2, 2.0])
    assert np.allclose(resolve(op, 0.9, z).x, resolve(again, 0.9, z).x, atol=1e-13)


def test_from_dict_accepts_yaml_style_numbers():
    op = ops.from_dict({"kind": "subdiff_l1", "w": "1e-1", "dim": 2})
    assert np.allclose(op.params["w"], 0.1)
