import numpy as np
import pytest

from inexact_dr import operators as ops
from inexact_dr import problems
from inexact_dr.diagnostics import solution_residual
from inexact_dr.problems import GenerationError


def test_affine_scalar_example():
    prob = problems.affine_pair_from([[1.0]], [0.0], [[1.0]], [-1.0])
    # oracle: 2x - 1 = 0
    assert prob.known_solution.x[0] == pytest.approx(0.5)
    assert prob.known_solution.b[0] == pytest.approx(-0.5)


def test_affine_two_dim_example():
    prob = problems.affine_pair_from(np.eye(2), [0.0, 0.0], np.eye(2), [-2.0, 0.0])
    assert np.allclose(prob.known_solution.x, [1.0, 0.0])
    assert np.allclose(prob.known_solution.b, [-1.0, 0.0])


def test_affine_skew_only():
    prob = problems.make_affine_pair(4, seed=1, rank_scale=0.0, ridge=0.0, skew=(1, 1),
                                     xbar=np.zeros(4))
    M1, M2 = prob.A.params["M"], prob.B.params["M"]
    assert np.allclose(M1, -M1.T) and np.allclose(M2, -M2.T)
    assert np.allclose(prob.A.params["q"] + prob.B.params["q"], 0.0)
    assert np.allclose(prob.known_solution.x, 0.0)
    assert solution_residual(prob.A, prob.B, (prob.known_solution.x, prob.known_solution.b)) <= 1e-9


def test_affine_skew_only_odd_dimension_is_singular():
    with pytest.raises(GenerationError, match="singular"):
        problems.make_affine_pair(3, seed=0, rank_scale=0.0, ridge=0.0, skew=(1, 1))


def test_feasibility_examples():
    prob = problems.feasibility_from_boxes(0, 2, 1, 3)
    assert prob.known_solution.x[0] == 1.5 and prob.known_solution.b[0] == 0.0
    same = problems.feasibility_from_boxes([0, -1], [2, 1], [0, -1], [2, 1])
    assert np.array_equal(same.known_solution.x, [1.0, 0.0])


def test_feasibility_overlap_width():
    for seed in range(50):
        prob = problems.make_feasibility(5, seed)
        lo = np.maximum(prob.A.params["lo"], prob.B.params["lo"])
        hi = np.minimum(prob.A.params["hi"], prob.B.params["hi"])
        assert np.all(hi - lo >= 0.1 - 1e-12)


@pytest.mark.parametrize("c, xbar, bbar", [(0.5, 0.0, -0.5), (2.0, 1.0, -1.0), (0.0, 0.0, 0.0)])
def test_l1_quadratic_examples(c, xbar, bbar):
    # oracle: minimise |x| + 0.5 (x - c)^2 on a fine grid
    grid = np.linspace(-5, 5, 2000001)
    x_grid = grid[np.argmin(np.abs(grid) + 0.5 * (grid - c) ** 2)]
    assert x_grid == pytest.approx(xbar, abs=1e-5)
    prob = problems.l1_quadratic_from([c], 1.0)
    assert prob.known_solution.x[0] == pytest.approx(xbar)
    assert prob.known_solution.b[0] == pytest.approx(bbar)
    assert -1.0 <= -prob.known_solution.b[0] <= 1.0 or prob.known_solution.x[0] != 0


@pytest.mark.parametrize("gen", sorted(problems.GENERATORS))
@pytest.mark.parametrize("n", [1, 2, 3, 10])
def test_generators_deterministic_and_valid(gen, n):
    f = problems.GENERATORS[gen]
    p1, p2 = f(n, 7), f(n, 7)
    assert np.array_equal(p1.x0, p2.x0)
    assert np.array_equal(p1.known_solution.x, p2.known_solution.x)
    assert p1.to_dict() == p2.to_dict()
    ks = p1.known_solution
    assert solution_residual(p1.A, p1.B, (ks.x, ks.b)) <= 1e-9
    assert not np.array_equal(f(n, 8).x0, p1.x0)


def test_bad_known_solution_rejected():
    A, B = ops.scaled_identity(1.0), ops.zero(1)
    with pytest.raises(GenerationError):
        problems.ProblemInstance("bad", A, B, 1, np.zeros(1),
                                 problems.SolutionPair([1.0], [0.0]))


def test_round_trip_through_operator_dicts():
    prob = problems.make_l1_quadratic(3, 2)
    d = prob.to_dict()
    A, B = ops.from_dict(d["A"]), ops.from_dict(d["B"])
    assert solution_residual(A, B, (np.array(d["known_solution"]["x"]),
                                    np.array(d["known_solution"]["b"]))) <= 1e-9
