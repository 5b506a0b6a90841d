"""Maximal monotone operators on R^n and their resolvents.

An operator is described by an immutable :class:`OperatorSpec` (a kind plus
numeric parameters). The resolvent of ``T`` with parameter ``lam`` maps ``z``
to the unique graph point ``(x, v)`` of ``T`` with ``x + lam * v = z``.

Set-valued kinds (l1 subdifferential, normal cones) report membership through
the projection of a candidate value onto the value set ``T(x)``.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import linalg as sla
from scipy.sparse import linalg as spla

from .hilbert import DimensionError, as_vector

KINDS = (
    "affine_monotone",
    "subdiff_l1",
    "normal_cone_box",
    "normal_cone_halfspace",
    "normal_cone_affine",
    "quadratic_gradient",
    "scaled_identity",
    "zero",
    "sum_shift",
)

SET_VALUED = frozenset({"subdiff_l1", "normal_cone_box", "normal_cone_halfspace",
                        "normal_cone_affine"})

#: Largest dimension for which affine resolvents use a dense LU solve.
DIRECT_SOLVE_MAX_DIM = 2000
PSD_TOL = -1e-10


class OperatorError(ValueError):
    """Invalid operator parameters."""


class UnsupportedKindError(OperatorError):
    pass


class DomainError(ValueError):
    """The operator has an empty value set at the requested point."""


class ResolventNonconvergence(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


class GraphPair(NamedTuple):
    x: np.ndarray
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Kind and parameters of a maximal monotone operator on R^dim.

    Use the module-level constructors (:func:`affine_monotone`,
    :func:`subdiff_l1`, ...) or :func:`from_dict` rather than building this
    directly.
    """

    kind: str
    dim: int
    params: Mapping[str, Any]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedKindError(f"unknown operator kind {self.kind!r}; "
                                       f"expected one of {', '.join(KINDS)}")
        if self.dim < 1:
            raise OperatorError(f"dimension must be >= 1, got {self.dim}")

    @property
    def set_valued(self) -> bool:
        if self.kind == "sum_shift":
            return self.params["inner"].set_valued
        return self.kind in SET_VALUED

    def to_dict(self) -> dict:
        """Plain-Python representation understood by :func:`from_dict`."""
        out: dict = {"kind": self.kind}
        for key, val in self.params.items():
            if key.startswith("_"):
                continue
            if isinstance(val, OperatorSpec):
                out[key] = val.to_dict()
            elif isinstance(val, np.ndarray):
                out[key] = val.tolist()
            else:
                out[key] = val
        if self.kind in ("zero", "scaled_identity", "subdiff_l1"):
            out["dim"] = self.dim
        return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _matrix(M, name: str) -> np.ndarray:
    M = np.atleast_2d(np.array(M, dtype=np.float64))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise OperatorError(f"{name} must be a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise OperatorError(f"{name} has non-finite entries")
    return M


def _weight(w, dim: int, name: str = "w") -> np.ndarray:
    w = np.broadcast_to(np.array(w, dtype=np.float64), (dim,)).copy()
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise OperatorError(f"{name} must be finite and non-negative")
    return _readonly(w)


def _resolve_dim(dim, *candidates) -> int:
    for c in candidates:
        if c is not None and np.ndim(c) > 0:
            return int(np.shape(c)[0])
    return 1 if dim is None else int(dim)


# ---------------------------------------------------------------- constructors

def affine_monotone(M, q=None) -> OperatorSpec:
    """``x -> M x + q`` with ``M + M^T`` positive semidefinite."""
    M = _matrix(M, "M")
    n = M.shape[0]
    q = np.zeros(n) if q is None else as_vector(q, "q")
    if q.size != n:
        raise DimensionError(f"q has dimension {q.size}, M is {n}x{n}")
    lam_min = float(np.linalg.eigvalsh(M + M.T)[0])
    if lam_min < PSD_TOL:
        raise OperatorError(f"M + M^T is not positive semidefinite "
                            f"(smallest eigenvalue {lam_min:.3e})")
    return OperatorSpec("affine_monotone", n, {"M": _readonly(M), "q": _readonly(q)})


def quadratic_gradient(Q, c=None) -> OperatorSpec:
    """Gradient ``x -> Q (x - c)`` of ``0.5 (x-c)^T Q (x-c)``, Q symmetric PSD."""
    Q = _matrix(Q, "Q")
    n = Q.shape[0]
    if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * (1 + np.abs(Q).max())):
        raise OperatorError("Q must be symmetric")
    Q = 0.5 * (Q + Q.T)
    lam_min = float(np.linalg.eigvalsh(Q)[0])
    if lam_min < PSD_TOL:
        raise OperatorError(f"Q is not positive semidefinite (smallest eigenvalue {lam_min:.3e})")
    c = np.zeros(n) if c is None else as_vector(c, "c")
    if c.size != n:
        raise DimensionError(f"c has dimension {c.size}, Q is {n}x{n}")
    return OperatorSpec("quadratic_gradient", n, {"Q": _readonly(Q), "c": _readonly(c)})


def scaled_identity(w=1.0, dim=None) -> OperatorSpec:
    n = _resolve_dim(dim, w)
    w = float(w) if np.ndim(w) == 0 else w
    if np.ndim(w) == 0:
        if not (math.isfinite(w) and w >= 0):
            raise OperatorError(f"w must be finite and non-negative, got {w}")
        return OperatorSpec("scaled_identity", n, {"w": w})
    return OperatorSpec("scaled_identity", n, {"w": _weight(w, n)})


def zero(dim: int = 1) -> OperatorSpec:
    return OperatorSpec("zero", int(dim), {})


def subdiff_l1(w=1.0, dim=None) -> OperatorSpec:
    """Subdifferential of ``x -> sum_i w_i |x_i|``."""
    n = _resolve_dim(dim, w)
    return OperatorSpec("subdiff_l1", n, {"w": _weight(w, n)})


def normal_cone_box(lo, hi, dim=None) -> OperatorSpec:
    """Normal cone of the box ``[lo, hi]``; infinite bounds are allowed."""
    n = _resolve_dim(dim, lo, hi)
    lo = np.broadcast_to(np.array(lo, dtype=np.float64), (n,)).copy()
    hi = np.broadcast_to(np.array(hi, dtype=np.float64), (n,)).copy()
    if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
        raise OperatorError("box bounds must not be NaN")
    if np.any(lo > hi):
        bad = int(np.argmax(lo > hi))
        raise OperatorError(f"box has lo > hi at coordinate {bad}: {lo[bad]} > {hi[bad]}")
    return OperatorSpec("normal_cone_box", n, {"lo": _readonly(lo), "hi": _readonly(hi)})


def normal_cone_halfspace(a, beta: float) -> OperatorSpec:
    """Normal cone of ``{x : <a, x> <= beta}``."""
    a = as_vector(a, "a")
    if not np.any(a):
        raise OperatorError("halfspace normal a must be nonzero")
    return OperatorSpec("normal_cone_halfspace", a.size, {"a": a, "beta": float(beta)})


def normal_cone_affine(C, d) -> OperatorSpec:
    """Normal cone of the affine set ``{x : C x = d}`` (must be nonempty)."""
    C = np.atleast_2d(np.array(C, dtype=np.float64))
    d = as_vector(d, "d")
    if C.shape[0] != d.size:
        raise DimensionError(f"C has {C.shape[0]} rows but d has {d.size} entries")
    C_pinv = np.linalg.pinv(C)
    x_feas = C_pinv @ d
    if np.linalg.norm(C @ x_feas - d) > 1e-9 * (1 + np.linalg.norm(d)):
        raise OperatorError("affine set {x : Cx = d} is empty")
    return OperatorSpec("normal_cone_affine", C.shape[1],
                        {"C": _readonly(C), "d": d, "_pinv": _readonly(C_pinv)})


def sum_shift(inner: OperatorSpec, c) -> OperatorSpec:
    """``x -> inner(x) + c``."""
    c = as_vector(c, "c")
    if c.size != inner.dim:
        raise DimensionError(f"shift has dimension {c.size}, inner operator {inner.dim}")
    return OperatorSpec("sum_shift", inner.dim, {"inner": inner, "c": c})


_CONSTRUCTORS = {
    "affine_monotone": lambda d: affine_monotone(d["M"], d.get("q")),
    "quadratic_gradient": lambda d: quadratic_gradient(d["Q"], d.get("c")),
    "scaled_identity": lambda d: scaled_identity(d.get("w", 1.0), d.get("dim")),
    "zero": lambda d: zero(d.get("dim", 1)),
    "subdiff_l1": lambda d: subdiff_l1(d.get("w", 1.0), d.get("dim")),
    "normal_cone_box": lambda d: normal_cone_box(d["lo"], d["hi"], d.get("dim")),
    "normal_cone_halfspace": lambda d: normal_cone_halfspace(d["a"], d["beta"]),
    "normal_cone_affine": lambda d: normal_cone_affine(d["C"], d["d"]),
    "sum_shift": lambda d: sum_shift(from_dict(d["inner"]), d["c"]),
}

_REQUIRED = {
    "affine_monotone": ("M",), "quadratic_gradient": ("Q",), "normal_cone_box": ("lo", "hi"),
    "normal_cone_halfspace": ("a", "beta"), "normal_cone_affine": ("C", "d"),
    "sum_shift": ("inner", "c"),
}


def _num(value):
    # YAML 1.1 reads "1e-3" as a string
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    if isinstance(value, list):
        return [_num(v) for v in value]
    return value


def from_dict(d: Mapping[str, Any]) -> OperatorSpec:
    """Build an operator from a mapping with a ``kind`` key and kind-specific keys."""
    if not isinstance(d, Mapping) or "kind" not in d:
        raise OperatorError("operator description needs a 'kind' key")
    kind = d["kind"]
    if kind not in _CONSTRUCTORS:
        raise UnsupportedKindError(f"unknown operator kind {kind!r}")
    missing = [k for k in _REQUIRED.get(kind, ()) if k not in d]
    if missing:
        raise OperatorError(f"operator kind {kind!r} is missing key(s): {', '.join(missing)}")
    clean = {k: (v if k == "inner" else _num(v)) for k, v in d.items()}
    return _CONSTRUCTORS[kind](clean)


# ------------------------------------------------------------------ resolvents

# scipy's LAPACK wrappers with the bundled OpenBLAS corrupt memory when called
# from several threads at once (seen with scipy 1.15 / OpenBLAS 0.3.29), so all
# scipy linear algebra in this module is serialised. The calls are tiny next to
# the rest of an iteration.
_LAPACK_LOCK = threading.Lock()


def _factor(op: OperatorSpec, lam: float, mat: np.ndarray):
    key = ("lu", lam)
    with _LAPACK_LOCK:
        fac = op._cache.get(key)
        if fac is None:
            fac = sla.lu_factor(np.eye(op.dim) + lam * mat)
            op._cache[key] = fac
    return fac


def _iterative_solve(K: np.ndarray, rhs: np.ndarray, target: float, max_iter: int) -> np.ndarray:
    """GMRES for ``K x = rhs``; succeeds once ``||K x - rhs|| <= target``."""
    with _LAPACK_LOCK:
        x, _ = spla.gmres(K, rhs, rtol=0.0, atol=target, restart=min(K.shape[0], 50),
                          maxiter=max_iter)
    res = float(np.linalg.norm(rhs - K @ x))
    if res <= target:
        return x
    raise ResolventNonconvergence("GMRES did not reach the resolvent tolerance", res)


def _resolvent_points(op: OperatorSpec, lam: float, Z: np.ndarray, tol: float = 0.0):
    """Resolvent outputs x for input rows of `Z` (shape ``(n,)`` or ``(m, n)``).

    Returns ``(X, exact)``; ``exact`` is False when an iterative solve was used.
    """
    kind, p = op.kind, op.params
    if kind == "zero":
        return Z.copy(), True
    if kind == "scaled_identity":
        return Z / (1.0 + lam * p["w"]), True
    if kind == "subdiff_l1":
        return np.sign(Z) * np.maximum(np.abs(Z) - lam * p["w"], 0.0), True
    if kind == "normal_cone_box":
        return np.clip(Z, p["lo"], p["hi"]), True
    if kind == "normal_cone_halfspace":
        a = p["a"]
        excess = np.maximum(Z @ a - p["beta"], 0.0)
        return Z - np.multiply.outer(excess, a) / (a @ a), True
    if kind == "normal_cone_affine":
        C, d, C_pinv = p["C"], p["d"], p["_pinv"]
        return Z - (Z @ C.T - d) @ C_pinv.T, True
    if kind == "sum_shift":
        return _resolvent_points(p["inner"], lam, Z - lam * p["c"], tol)
    if kind in ("affine_monotone", "quadratic_gradient"):
        if kind == "affine_monotone":
            mat, rhs = p["M"], Z - lam * p["q"]
        else:
            mat, rhs = p["Q"], Z + lam * (p["Q"] @ p["c"])
        if op.dim <= DIRECT_SOLVE_MAX_DIM:
            fac = _factor(op, lam, mat)
            with _LAPACK_LOCK:
                return sla.lu_solve(fac, rhs.T).T, True
        K = np.eye(op.dim) + lam * mat
        rows = np.atleast_2d(rhs)
        out = np.empty_like(rows)
        for i, r in enumerate(rows):
            target = 0.5 * tol if tol > 0 else 1e-12 * (1 + np.linalg.norm(r))
            out[i] = _iterative_solve(K, r, target, max_iter=max(op.dim, 100))
        return out.reshape(rhs.shape), False
    raise UnsupportedKindError(f"no resolvent solver for kind {kind!r}")


def resolve(op: OperatorSpec, lam: float, z, tol: float = 0.0) -> GraphPair:
    """Return the graph point ``(x, v)`` of `op` with ``x + lam * v = z``.

    Parameters
    ----------
    op : OperatorSpec
    lam : float
        Resolvent parameter, must be positive.
    z : array_like
        Resolvent input.
    tol : float, optional
        Accuracy demanded from iterative solvers on ``||x + lam v - z||``.
        ``0`` requests the exact (closed-form or direct) path.

    Returns
    -------
    GraphPair
        For closed-form paths ``v = (z - x) / lam``. When an iterative solver
        was used, ``v`` is evaluated from the operator so that membership
        stays exact and only the resolvent equation is approximate.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if tol < 0:
        raise ValueError(f"tol must be non-negative, got {tol}")
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (op.dim,):
        raise DimensionError(f"input has dimension {z.size}, operator acts on R^{op.dim}")
    x, exact = _resolvent_points(op, lam, z, tol)
    if exact:
        v = (z - x) / lam
    else:
        v = evaluate(op, x)
    return GraphPair(x, v)


def resolve_many(op: OperatorSpec, lam: float, Z: np.ndarray):
    """Row-wise resolvent of a batch ``Z`` of shape ``(m, n)``; returns ``(X, V)``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    X, exact = _resolvent_points(op, lam, Z)
    if exact:
        return X, (Z - X) / lam
    return X, np.array([evaluate(op, x) for x in X])


# ------------------------------------------------------------------ value sets

def _near(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) <= 1e-12 * (1 + np.abs(b))


def value_projection(op: OperatorSpec, x, t) -> np.ndarray:
    """Closest point of the value set ``op(x)`` to `t`.

    For single-valued kinds this is just ``op(x)``. Raises :class:`DomainError`
    when ``op(x)`` is empty.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    kind, p = op.kind, op.params
    if kind == "zero":
        return np.zeros_like(x)
    if kind == "scaled_identity":
        return p["w"] * x
    if kind == "affine_monotone":
        return p["M"] @ x + p["q"]
    if kind == "quadratic_gradient":
        return p["Q"] @ (x - p["c"])
    if kind == "sum_shift":
        return value_projection(p["inner"], x, t - p["c"]) + p["c"]
    if kind == "subdiff_l1":
        w = p["w"]
        return np.where(x > 0, w, np.where(x < 0, -w, np.clip(t, -w, w)))
    if kind == "normal_cone_box":
        lo, hi = p["lo"], p["hi"]
        at_lo = np.isfinite(lo) & _near(x, lo)
        at_hi = np.isfinite(hi) & _near(x, hi)
        outside = ((x < lo) & ~at_lo) | ((x > hi) & ~at_hi)
        if np.any(outside):
            raise DomainError(f"point lies outside the box at coordinate {int(np.argmax(outside))}")
        out = np.zeros_like(x)
        out = np.where(at_lo, np.minimum(t, 0.0), out)
        out = np.where(at_hi, np.maximum(t, 0.0), out)
        return np.where(at_lo & at_hi, t, out)
    if kind == "normal_cone_halfspace":
        a, beta = p["a"], p["beta"]
        gap = x @ a - beta
        slack = 1e-12 * (1 + abs(beta) + np.linalg.norm(a) * np.linalg.norm(x))
        if gap > slack:
            raise DomainError(f"point violates the halfspace by {gap:.3e}")
        if gap < -slack:
            return np.zeros_like(x)
        return max(t @ a, 0.0) / (a @ a) * a
    if kind == "normal_cone_affine":
        C, d, C_pinv = p["C"], p["d"], p["_pinv"]
        gap = np.linalg.norm(C @ x - d)
        if gap > 1e-10 * (1 + np.linalg.norm(d) + np.linalg.norm(C) * np.linalg.norm(x)):
            raise DomainError(f"point is off the affine set by {gap:.3e}")
        return C_pinv @ (C @ t)
    raise UnsupportedKindError(f"kind {kind!r}")


def evaluate(op: OperatorSpec, x) -> np.ndarray:
    """Minimal-norm element of ``op(x)``."""
    return value_projection(op, x, np.zeros(op.dim))


def membership_residual(op: OperatorSpec, pair) -> float:
    """Distance from ``pair.v`` to ``op(pair.x)``; ``inf`` outside the domain."""
    x, v = pair
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != (op.dim,) or v.shape != (op.dim,):
        raise DimensionError(f"pair dimensions {x.shape}, {v.shape} do not match R^{op.dim}")
    try:
        target = value_projection(op, x, v)
    except DomainError:
        return math.inf
    return float(np.linalg.norm(v - target))


def monotonicity_probe(op: OperatorSpec, pairs: Sequence[GraphPair]) -> float:
    """Minimum of ``<x_i - x_j, v_i - v_j>`` over all distinct pairs of graph points."""
    if len(pairs) < 2:
        raise ValueError(f"monotonicity probe needs at least 2 pairs, got {len(pairs)}")
    X = np.array([np.asarray(p[0], dtype=np.float64) for p in pairs])
    V = np.array([np.asarray(p[1], dtype=np.float64) for p in pairs])
    if X.shape[1] != op.dim:
        raise DimensionError(f"pairs have dimension {X.shape[1]}, operator acts on R^{op.dim}")
    best = math.inf
    for i, j in itertools.combinations(range(len(pairs)), 2):
        best = min(best, float((X[i] - X[j]) @ (V[i] - V[j])))
    return best
