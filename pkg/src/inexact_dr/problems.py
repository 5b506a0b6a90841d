"""Seeded test problems ``0 in A(x) + B(x)`` with known extended solutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import operators as ops
from .diagnostics import SolutionPair, solution_residual
from .operators import OperatorSpec

SOLUTION_TOL = 1e-9


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    name: str
    A: OperatorSpec
    B: OperatorSpec
    dim: int
    x0: np.ndarray
    known_solution: Optional[SolutionPair] = None
    notes: str = ""

    def __post_init__(self):
        if self.A.dim != self.dim or self.B.dim != self.dim:
            raise ValueError(f"operator dimensions ({self.A.dim}, {self.B.dim}) "
                             f"do not match problem dimension {self.dim}")
        if self.known_solution is not None:
            res = solution_residual(self.A, self.B, (self.known_solution.x, self.known_solution.b))
            if not res <= SOLUTION_TOL:
                raise GenerationError(f"{self.name}: known solution has residual {res:.3e}")

    def to_dict(self) -> dict:
        """Inline problem description for config files."""
        d = {"name": self.name, "dim": self.dim, "x0": self.x0.tolist(),
             "A": self.A.to_dict(), "B": self.B.to_dict(), "notes": self.notes}
        if self.known_solution is not None:
            d["known_solution"] = {"x": self.known_solution.x.tolist(),
                                   "b": self.known_solution.b.tolist()}
        return d


# ------------------------------------------------------------------ affine pair

def affine_pair_from(M1, q1, M2, q2, x0=None, name: str = "affine_pair") -> ProblemInstance:
    """A(x) = M1 x + q1, B(x) = M2 x + q2 with the solution obtained by a linear solve."""
    A = ops.affine_monotone(M1, q1)
    B = ops.affine_monotone(M2, q2)
    S = A.params["M"] + B.params["M"]
    xbar = np.linalg.solve(S, -(A.params["q"] + B.params["q"]))
    bbar = B.params["M"] @ xbar + B.params["q"]
    x0 = np.zeros(A.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    return ProblemInstance(name, A, B, A.dim, x0, SolutionPair(xbar, bbar),
                           notes="xbar solves (M1 + M2) x = -(q1 + q2); bbar = M2 xbar + q2")


def _skew(rng: np.random.Generator, n: int) -> np.ndarray:
    G = rng.standard_normal((n, n))
    return (G - G.T) / np.sqrt(2 * n)


def make_affine_pair(n: int, seed: int = 0, *, rank_scale: float = 1.0, ridge: float = 0.5,
                     skew=None, xbar=None) -> ProblemInstance:
    """Two affine monotone operators ``M_i x + q_i`` with ``M_i = R_i^T R_i + ridge I + s_i K_i``.

    ``K_i`` is skew-symmetric and ``s_i`` is drawn from {0, 1} unless `skew`
    fixes it, so the pair is generally not a pair of gradients. ``q`` is
    chosen to make the pre-drawn `xbar` the solution.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    for _ in range(10):
        mats = []
        s = rng.integers(0, 2, size=2) if skew is None else skew
        for s_i in s:
            R = rank_scale * rng.standard_normal((n, n)) / np.sqrt(n)
            mats.append(R.T @ R + ridge * np.eye(n) + s_i * _skew(rng, n))
        target = rng.standard_normal(n) if xbar is None else np.asarray(xbar, dtype=np.float64)
        S = mats[0] + mats[1]
        if np.linalg.cond(S) > 1e12:
            continue
        q2 = rng.standard_normal(n)
        q1 = -S @ target - q2
        x0 = rng.standard_normal(n)
        A = ops.affine_monotone(mats[0], q1)
        B = ops.affine_monotone(mats[1], q2)
        sol = SolutionPair(target, B.params["M"] @ target + B.params["q"])
        return ProblemInstance(f"affine_pair_n{n}_s{seed}", A, B, n, x0, sol,
                               notes=f"skew flags {tuple(int(v) for v in s)}; "
                                     "q1 chosen so that the pre-drawn xbar solves the sum")
    raise GenerationError(f"M1 + M2 singular in 10 draws (n={n}, seed={seed})")


# ------------------------------------------------------------------ feasibility

def feasibility_from_boxes(lo1, hi1, lo2, hi2, x0=None, name: str = "feasibility"):
    A = ops.normal_cone_box(lo1, hi1)
    B = ops.normal_cone_box(lo2, hi2)
    lo = np.maximum(A.params["lo"], B.params["lo"])
    hi = np.minimum(A.params["hi"], B.params["hi"])
    if np.any(lo > hi):
        raise GenerationError("boxes do not intersect")
    mid = 0.5 * (lo + hi)
    x0 = np.zeros(A.dim) if x0 is None else np.asarray(x0, dtype=np.float64)
    notes = ("xbar = midpoint of the intersection; bbar = 0 valid since "
             "the intersection has nonempty interior" if np.all(lo < hi) else
             "xbar = midpoint of the intersection; bbar = 0")
    return ProblemInstance(name, A, B, A.dim, x0, SolutionPair(mid, np.zeros(A.dim)), notes=notes)


def make_feasibility(n: int, seed: int = 0) -> ProblemInstance:
    """Normal cones of two random boxes overlapping by at least 0.1 per coordinate."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    lo1 = rng.uniform(-1, 1, n)
    hi1 = lo1 + rng.uniform(0.5, 2, n)
    lo2 = rng.uniform(lo1 - 1, hi1 - 0.1)
    hi2 = np.maximum(lo2 + rng.uniform(0.5, 2, n), np.maximum(lo1, lo2) + 0.1)
    x0 = rng.normal(0, 2, n)
    return feasibility_from_boxes(lo1, hi1, lo2, hi2, x0, name=f"feasibility_n{n}_s{seed}")


# ------------------------------------------------------------------ l1 + quadratic

def l1_quadratic_from(c, w=1.0, x0=None, name: str = "l1_quadratic") -> ProblemInstance:
    """A = w * subdifferential of the l1 norm, B(x) = x - c."""
    c = np.atleast_1d(np.asarray(c, dtype=np.float64))
    n = c.size
    A = ops.subdiff_l1(w, dim=n)
    B = ops.quadratic_gradient(np.eye(n), c)
    wv = A.params["w"]
    xbar = np.sign(c) * np.maximum(np.abs(c) - wv, 0.0)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64)
    return ProblemInstance(name, A, B, n, x0, SolutionPair(xbar, xbar - c),
                           notes="xbar = soft threshold of c at level w; bbar = xbar - c")


def make_l1_quadratic(n: int, seed: int = 0, w: float = 1.0) -> ProblemInstance:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    c = rng.normal(0, 2, n)
    x0 = rng.normal(0, 2, n)
    return l1_quadratic_from(c, w, x0, name=f"l1_quadratic_n{n}_s{seed}")


GENERATORS = {
    "affine_pair": make_affine_pair,
    "feasibility": make_feasibility,
    "l1_quadratic": make_l1_quadratic,
}
