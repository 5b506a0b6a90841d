"""Runtime checks of the inequalities and identities behind convergence.

Every checker consumes a finished trace (a list of
:class:`~inexact_dr.drm.IterateRecord`) and returns :class:`CheckReport`
objects. A report passes when ``margin >= -tolerance``; unless stated
otherwise the tolerance is ``1e-9 * (1 + |lhs| + |rhs|)``.

The closure checks work on finite sequences in R^n. They are finite
surrogates of statements about nets and weak limits and are labelled as such.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .drm import IterateRecord, SolveResult, SolverConfig
from .hilbert import pair_distance
from .operators import GraphPair, OperatorSpec, membership_residual, resolve_many

REL_TOL = 1e-9
COMPANION_RTOL = 1e-10
SOLUTION_TOL = 1e-9

CHECK_NAMES = ("membership", "companions", "inexactness", "lemma_bas", "quasi_fejer",
               "summability", "concavity", "graph_closure", "solution")
NEEDS_SOLUTION = frozenset({"lemma_bas", "quasi_fejer", "summability", "concavity"})
NEEDS_CONVERGENCE = frozenset({"graph_closure", "solution"})


class InvalidSolutionError(ValueError):
    pass


@dataclass(frozen=True)
class CheckReport:
    name: str
    k: Optional[int]
    lhs: float
    rhs: float
    margin: float
    passed: bool
    tolerance: float
    note: str = ""
    extra: Mapping[str, float] = field(default_factory=dict)


def _report(name: str, k: Optional[int], lhs: float, rhs: float, sense: str,
            tolerance: Optional[float] = None, **kw) -> CheckReport:
    """Build a report; `sense` is ``"le"`` (lhs <= rhs), ``"ge"`` or ``"eq"``."""
    if sense == "le":
        margin = rhs - lhs
    elif sense == "ge":
        margin = lhs - rhs
    else:
        margin = -abs(lhs - rhs)
    if tolerance is None:
        tolerance = REL_TOL * (1.0 + abs(lhs) + abs(rhs))
    passed = bool(margin >= -tolerance) if math.isfinite(margin) else False
    return CheckReport(name, k, float(lhs), float(rhs), float(margin), passed, float(tolerance), **kw)


@dataclass(frozen=True, eq=False)
class SolutionPair:
    """A point (x, b) of the extended solution set: b in B(x) and -b in A(x)."""

    x: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64))

    def validate(self, A: OperatorSpec, B: OperatorSpec, tol: float = SOLUTION_TOL) -> None:
        rb = membership_residual(B, (self.x, self.b))
        ra = membership_residual(A, (self.x, -self.b))
        if not (rb <= tol and ra <= tol):
            raise InvalidSolutionError(f"not in S(A,B): residual in B {rb:.3e}, "
                                       f"residual of -b in A {ra:.3e}")


def solution_residual(A: OperatorSpec, B: OperatorSpec, pair) -> float:
    """``max(dist(b, B(x)), dist(-b, A(x)))`` for ``pair = (x, b)``."""
    x, b = (np.asarray(u, dtype=np.float64) for u in pair)
    return max(membership_residual(B, (x, b)), membership_residual(A, (x, -b)))


def solution_estimate(A: OperatorSpec, B: OperatorSpec, record: IterateRecord):
    """Best of ``(x_k, b_k)`` and ``(y_k, -a_k)`` as a point of S(A, B).

    Both pairs converge to the same extended solution, but each is exactly on
    only one of the two graphs; for a set-valued operator the other membership
    test is discontinuous, so the pair exact on that operator is preferred.
    Returns ``((x, b), residual)``.
    """
    cands = [(record.x_k, record.b_k), (record.y_k, -record.a_k)]
    scored = [(solution_residual(A, B, c), i) for i, c in enumerate(cands)]
    res, i = min(scored)
    return cands[i], res


def _p_dist(x, b, p: SolutionPair, lam: float) -> float:
    return pair_distance(x, b, p.x, p.b, lam)


def _require(trace: Sequence[IterateRecord]) -> None:
    if not trace:
        raise ValueError("trace is empty")


def _maybe_validate(p, A, B):
    if A is not None and B is not None:
        p.validate(A, B)


def fejer_distances(trace: Sequence[IterateRecord], p: SolutionPair, lam: float) -> list:
    """``[||p_0 - p||, ||p_1 - p||, ...]`` in the lambda-norm."""
    _require(trace)
    out = [_p_dist(trace[0].x_prev, trace[0].b_prev, p, lam)]
    out += [_p_dist(r.x_k, r.b_k, p, lam) for r in trace]
    return out


# ------------------------------------------------------------ per-iterate checks

def check_membership(trace, A: OperatorSpec, B: OperatorSpec) -> list:
    """Graph membership of (y_k, a_k) in A and (x_k, b_k) in B."""
    reports = []
    for r in trace:
        scale = 1.0 + float(np.linalg.norm(r.x_k)) + float(np.linalg.norm(r.b_k))
        reports.append(_report("membership_A", r.k, membership_residual(A, (r.y_k, r.a_k)), 0.0,
                               "le", REL_TOL * scale))
        reports.append(_report("membership_B", r.k, membership_residual(B, (r.x_k, r.b_k)), 0.0,
                               "le", REL_TOL * scale))
    return reports


def check_companions(trace, lam: float) -> list:
    """Identities linking the companion pairs to the previous iterate.

    ``x_{k-1} - xhat_k = lam (ahat_k + bhat_k)``,
    ``lam (b_{k-1} - bhat_k) = xhat_k - yhat_k`` and
    ``xhat_k - yhat_k + lam (ahat_k + bhat_k) = lam (ahat_k + b_{k-1}) = x_{k-1} - yhat_k``.
    """
    reports = []
    for r in trace:
        tol = COMPANION_RTOL * (1.0 + float(np.linalg.norm(r.x_prev))
                                + lam * float(np.linalg.norm(r.b_prev)))
        update_1 = r.x_prev - r.xhat_k - lam * (r.ahat_k + r.bhat_k)
        update_2 = lam * (r.b_prev - r.bhat_k) - (r.xhat_k - r.yhat_k)
        lhs_all = r.xhat_k - r.yhat_k + lam * (r.ahat_k + r.bhat_k)
        mid_all = lam * (r.ahat_k + r.b_prev)
        rhs_all = r.x_prev - r.yhat_k
        for name, vec in (("companion_update_1", update_1), ("companion_update_2", update_2),
                          ("companion_all_1", lhs_all - mid_all),
                          ("companion_all_2", mid_all - rhs_all)):
            reports.append(_report(name, r.k, float(np.linalg.norm(vec)), 0.0, "le", tol))
    return reports


def check_inexactness(trace, lam: float) -> list:
    """Transfer of the step tolerances to distances from the companions.

    ``||(y_k - yhat_k, a_k - ahat_k)||_lam <= alpha_k`` and
    ``||(x_k - xhat_k, b_k - bhat_k)||_lam <= alpha_k + beta_k``.
    """
    reports = []
    for r in trace:
        ye = pair_distance(r.y_k, r.a_k, r.yhat_k, r.ahat_k, lam)
        pp = pair_distance(r.x_k, r.b_k, r.xhat_k, r.bhat_k, lam)
        reports.append(_report("inexact_ye", r.k, ye, r.alpha_k, "le"))
        reports.append(_report("inexact_pp", r.k, pp, r.alpha_k + r.beta_k, "le"))
    return reports


def check_lemma_bas(trace, p: SolutionPair, lam: float, A=None, B=None) -> list:
    """Descent of the companion against any point of the extended solution set.

    For each k, ``||p_{k-1} - p||^2 >= ||phat_k - p||^2 + ||x_{k-1} - yhat_k||^2``
    (all norms in the lambda-weighted space), together with the equality
    ``||x_{k-1} - yhat_k|| = lam ||ahat_k + b_{k-1}||``.
    """
    _require(trace)
    _maybe_validate(p, A, B)
    reports = []
    for r in trace:
        step = float(np.linalg.norm(r.x_prev - r.yhat_k))
        lhs = _p_dist(r.x_prev, r.b_prev, p, lam) ** 2
        rhs = _p_dist(r.xhat_k, r.bhat_k, p, lam) ** 2 + step ** 2
        reports.append(_report("lemma_bas", r.k, lhs, rhs, "ge"))
        dual = lam * float(np.linalg.norm(r.ahat_k + r.b_prev))
        reports.append(_report("lemma_bas_identity", r.k, step, dual, "eq"))
    return reports


def check_quasi_fejer(trace, p: SolutionPair, schedule=None, lam: float = 1.0,
                      A=None, B=None) -> list:
    """``||p_k - p|| <= alpha_k + beta_k + ||p_{k-1} - p||`` for every k.

    Tolerances come from `schedule` when given, otherwise from the records.
    """
    _require(trace)
    _maybe_validate(p, A, B)
    reports = []
    for r in trace:
        alpha, beta = schedule.values(r.k) if schedule is not None else (r.alpha_k, r.beta_k)
        lhs = _p_dist(r.x_k, r.b_k, p, lam)
        rhs = alpha + beta + _p_dist(r.x_prev, r.b_prev, p, lam)
        reports.append(_report("quasi_fejer", r.k, lhs, rhs, "le"))
    return reports


def _bound_constant(trace, p: SolutionPair, lam: float) -> float:
    return 1.0 + max(fejer_distances(trace, p, lam))


def check_concavity(trace, p: SolutionPair, lam: float, A=None, B=None) -> list:
    """``||phat_k - p|| <= ||p_{k-1} - p|| - ||x_{k-1} - yhat_k||^2 / (2M)``.

    ``M = 1 + sup_k ||p_k - p||`` is taken over the trace.
    """
    _require(trace)
    _maybe_validate(p, A, B)
    M = _bound_constant(trace, p, lam)
    reports = []
    for r in trace:
        step = float(np.linalg.norm(r.x_prev - r.yhat_k))
        lhs = _p_dist(r.xhat_k, r.bhat_k, p, lam)
        rhs = _p_dist(r.x_prev, r.b_prev, p, lam) - step ** 2 / (2 * M)
        reports.append(_report("concavity", r.k, lhs, rhs, "le", extra={"M": M}))
    return reports


def check_summability_bound(trace, p: SolutionPair, schedule=None, lam: float = 1.0,
                            A=None, B=None) -> CheckReport:
    """``(1/2M) sum_k ||x_{k-1} - yhat_k||^2 <= ||p_0 - p|| + sum_k (alpha_k + beta_k)``."""
    _require(trace)
    _maybe_validate(p, A, B)
    M = _bound_constant(trace, p, lam)
    squares = sum(float(np.linalg.norm(r.x_prev - r.yhat_k)) ** 2 for r in trace)
    tolerances = 0.0
    for r in trace:
        alpha, beta = schedule.values(r.k) if schedule is not None else (r.alpha_k, r.beta_k)
        tolerances += alpha + beta
    lhs = squares / (2 * M)
    rhs = _p_dist(trace[0].x_prev, trace[0].b_prev, p, lam) + tolerances
    return _report("summability", None, lhs, rhs, "le", extra={"M": M, "iterations": len(trace)})


# ---------------------------------------------------------------- Fitzpatrick

@dataclass(frozen=True)
class FitzpatrickEstimate:
    value: float
    argmax_pair: GraphPair
    samples: int


FITZPATRICK_RADII = (0.1, 1.0, 10.0)
_CHUNK = 512


def _resolve_chunked(op, lam, Z):
    # fixed-shape batches so each sample's rounding does not depend on the budget
    m, n = Z.shape
    pad = (-m) % _CHUNK
    Zp = np.vstack([Z, np.zeros((pad, n))])
    parts = [resolve_many(op, lam, Zp[i:i + _CHUNK]) for i in range(0, m + pad, _CHUNK)]
    X = np.vstack([p[0] for p in parts])[:m]
    V = np.vstack([p[1] for p in parts])[:m]
    return X, V


def fitzpatrick_estimate(op: OperatorSpec, query, sample_budget: int, seed: int = 0,
                         lam: float = 1.0) -> FitzpatrickEstimate:
    """Lower estimate of ``sup_{(y, y*) in op} <x, y*> + <y, x*> - <y, y*>``.

    Graph points are drawn as resolvents of Gaussian inputs centred at
    ``x + lam * x*`` (the resolvent preimage of the query) with radii cycling
    through 0.1, 1 and 10 times ``1 + ||x||``. The query itself is included
    when it lies on the graph, so the estimate never falls below ``<x, x*>``
    there. Sample ``i`` depends only on `seed` and ``i``, which makes the
    estimate non-decreasing in `sample_budget`.
    """
    x, xs = (np.atleast_1d(np.asarray(u, dtype=np.float64)) for u in query)
    best, arg, used = -math.inf, None, 0
    scale = 1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(xs))
    if membership_residual(op, (x, xs)) <= REL_TOL * scale:
        best, arg, used = float(x @ xs), GraphPair(x, xs), 1
    if sample_budget > 0:
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((sample_budget, op.dim))
        radii = np.take(FITZPATRICK_RADII, np.arange(sample_budget) % 3) \
            * (1.0 + float(np.linalg.norm(x)))
        Z = x + lam * xs + radii[:, None] * G
        Y, Ys = _resolve_chunked(op, lam, Z)
        vals = (np.einsum("ij,j->i", Ys, x) + np.einsum("ij,j->i", Y, xs)
                - np.einsum("ij,ij->i", Y, Ys))
        i = int(np.argmax(vals))
        if vals[i] > best:
            best, arg = float(vals[i]), GraphPair(Y[i], Ys[i])
        used += sample_budget
    return FitzpatrickEstimate(best, arg, used)


# ---------------------------------------------------------------- graph closure

def check_graph_closure(ops: Sequence[OperatorSpec], sequences: Sequence[Sequence],
                        limit, tol: float = 1e-6) -> CheckReport:
    """Finite surrogate of closedness of maximal monotone graphs under joint limits.

    ``sequences[j]`` lists graph points ``(x_{j,i}, x*_{j,i})`` of ``ops[j]``;
    ``limit = (xbar, [xbar*_1, ..., xbar*_m])``. Hypotheses (coinciding
    primal components, summed duals converging to ``sum_j xbar*_j``,
    componentwise convergence) are measured over the tail window, the last
    ``max(10, 20%)`` entries. The conclusion residual is
    ``max_j dist(xbar*_j, ops[j](xbar))`` and must not exceed `tol`.
    """
    m = len(ops)
    if m < 1 or len(sequences) != m:
        raise ValueError(f"need one sequence per operator ({m} operators, {len(sequences)} sequences)")
    lengths = {len(s) for s in sequences}
    if len(lengths) != 1:
        raise ValueError(f"sequence lengths differ: {sorted(lengths)}")
    L = lengths.pop()
    if L < 2:
        raise ValueError("sequences need at least 2 elements")
    xbar = np.asarray(limit[0], dtype=np.float64)
    xstars = [np.asarray(v, dtype=np.float64) for v in limit[1]]
    if len(xstars) != m:
        raise ValueError(f"limit has {len(xstars)} dual components for {m} operators")

    X = np.array([[np.asarray(pt[0], dtype=np.float64) for pt in s] for s in sequences])
    V = np.array([[np.asarray(pt[1], dtype=np.float64) for pt in s] for s in sequences])
    for j, op in enumerate(ops):
        for i in range(L):
            res = membership_residual(op, (X[j, i], V[j, i]))
            if not res <= REL_TOL * (1 + np.linalg.norm(X[j, i]) + np.linalg.norm(V[j, i])):
                raise ValueError(f"sequence {j} element {i} is not in the graph "
                                 f"(residual {res:.3e})")

    w = min(L, max(10, math.ceil(0.2 * L)))
    Xt, Vt = X[:, L - w:], V[:, L - w:]
    xstar_sum = np.sum(xstars, axis=0)
    spread = max((float(np.linalg.norm(Xt[j] - Xt[k], axis=1).max())
                  for j in range(m) for k in range(j + 1, m)), default=0.0)
    dual_sum = float(np.linalg.norm(Vt.sum(axis=0) - xstar_sum, axis=1).max())
    primal_lim = float(np.linalg.norm(Xt - xbar, axis=2).max())
    dual_lim = max(float(np.linalg.norm(Vt[j] - xstars[j], axis=1).max()) for j in range(m))
    hyp = max(spread, dual_sum, primal_lim, dual_lim)
    # duality products along the last element versus at the limit
    gap = sum(float(X[j, -1] @ V[j, -1] - xbar @ xstars[j]) for j in range(m))

    conclusion = max(membership_residual(op, (xbar, xs)) for op, xs in zip(ops, xstars))
    return _report("graph_closure", None, conclusion, tol, "le", tolerance=0.0,
                   note=f"finite surrogate over the last {w} of {L} terms",
                   extra={"hypothesis_violation": hyp, "spread": spread, "dual_sum": dual_sum,
                          "primal_limit": primal_lim, "dual_limit": dual_lim,
                          "duality_gap_last": gap})


def closure_inputs(trace: Sequence[IterateRecord], A=None, B=None):
    """Sequences and limit estimate for :func:`check_graph_closure` from a DR trace.

    Pairs ``(y_{k+1}, a_{k+1})`` in A with ``(x_k, b_k)`` in B so that the
    primal gaps are ``x_k - y_{k+1}`` and the dual sums ``a_{k+1} + b_k``.
    The limit is estimated from the last iterate as ``(x_K, (-b_K, b_K))``,
    or by :func:`solution_estimate` when both operators are given.
    """
    if len(trace) < 3:
        raise ValueError("need at least 3 iterations to form closure sequences")
    seq_a = [GraphPair(r.y_k, r.a_k) for r in trace[1:]]
    seq_b = [GraphPair(r.x_k, r.b_k) for r in trace[:-1]]
    last = trace[-1]
    if A is not None and B is not None:
        (x, b), _ = solution_estimate(A, B, last)
    else:
        x, b = last.x_k, last.b_k
    return [seq_a, seq_b], (x, [-b, b])


# ---------------------------------------------------------------- orchestration

def run_checks(names: Sequence[str], result: SolveResult, A: OperatorSpec, B: OperatorSpec,
               config: SolverConfig, solution: Optional[SolutionPair] = None,
               closure_tol: float = 1e-6):
    """Run the named checks over a solve result.

    Returns ``(reports, notes)``; checks that do not apply (no known solution,
    run not converged, empty trace) are refused with a note instead of failing.
    """
    names = list(CHECK_NAMES) if "all" in names else list(names)
    unknown = [n for n in names if n not in CHECK_NAMES]
    if unknown:
        raise ValueError(f"unknown check(s): {', '.join(unknown)}")
    trace, lam = result.trace, config.lam
    if solution is not None:
        solution.validate(A, B)
    reports, notes = [], []
    for name in names:
        if not trace:
            notes.append(f"{name}: refused: empty trace")
            continue
        if name in NEEDS_SOLUTION and solution is None:
            notes.append(f"{name}: refused: no known solution")
            continue
        if name in NEEDS_CONVERGENCE and result.status != "converged":
            notes.append(f"{name}: refused: run did not converge ({result.status})")
            continue
        if name == "membership":
            reports += check_membership(trace, A, B)
        elif name == "companions":
            reports += check_companions(trace, lam)
        elif name == "inexactness":
            reports += check_inexactness(trace, lam)
        elif name == "lemma_bas":
            reports += check_lemma_bas(trace, solution, lam)
        elif name == "quasi_fejer":
            reports += check_quasi_fejer(trace, solution, config.schedule, lam)
        elif name == "summability":
            reports.append(check_summability_bound(trace, solution, config.schedule, lam))
        elif name == "concavity":
            reports += check_concavity(trace, solution, lam)
        elif name == "graph_closure":
            if len(trace) < 3:
                notes.append(f"{name}: refused: fewer than 3 iterations")
                continue
            seqs, limit = closure_inputs(trace, A, B)
            try:
                reports.append(check_graph_closure([A, B], seqs, limit, closure_tol))
            except ValueError as exc:
                reports.append(_report("graph_closure", None, math.inf, closure_tol, "le",
                                       tolerance=0.0, note=str(exc)))
        elif name == "solution":
            _, res = solution_estimate(A, B, trace[-1])
            reports.append(_report("solution", trace[-1].k, res, closure_tol, "le", tolerance=0.0))
    return reports, notes
