"""Inexact Douglas-Rachford iteration with summable error tolerances.

Each iteration k performs two approximate resolvent steps

    (a) find (y_k, a_k) in A with ||y_k + lam a_k - (x_{k-1} - lam b_{k-1})|| <= alpha_k
    (b) find (x_k, b_k) in B with ||x_k + lam b_k - (y_k + lam b_{k-1})|| <= beta_k

and records, alongside, the exact companion pairs obtained from the same
previous iterate with zero error. Inexactness is injected by perturbing the
resolvent input, so graph membership of the produced pairs stays exact and
only the resolvent equation carries the error.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .hilbert import DimensionError, as_vector
from .operators import (DomainError, GraphPair, OperatorSpec, evaluate,
                        membership_residual, resolve)

logger = logging.getLogger(__name__)

SCHEDULE_KINDS = ("geometric", "power", "zero")
INEXACTNESS_MODES = ("exact", "random_ball", "adversarial_boundary")

#: Relative slack for identities that hold exactly in real arithmetic.
IDENTITY_RTOL = 1e-10
MEMBERSHIP_RTOL = 1e-9


class ContractError(RuntimeError):
    """A pre- or postcondition of an iteration step was violated."""


@dataclass(frozen=True)
class ErrorSchedule:
    """Summable tolerance sequence ``alpha_k`` (and ``beta_k``).

    ``geometric`` gives ``c * rho**k``, ``power`` gives ``c * k**(-p)`` and
    ``zero`` gives 0. When `beta` is None the same sequence is used for both
    steps.
    """

    kind: str = "geometric"
    c: float = 1e-3
    rho: float = 0.5
    p: float = 2.0
    beta: Optional["ErrorSchedule"] = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ValueError(f"schedule constant c must be >= 0, got {self.c}")
        if self.kind == "geometric" and not 0 <= self.rho < 1:
            raise ValueError(f"geometric schedule needs 0 <= rho < 1, got {self.rho}")
        if self.kind == "power" and not self.p > 1:
            raise ValueError(f"power schedule needs p > 1, got {self.p}")
        if self.beta is not None and self.beta.beta is not None:
            raise ValueError("nested beta schedules are not allowed")

    @classmethod
    def geometric(cls, c: float, rho: float) -> "ErrorSchedule":
        return cls("geometric", c=c, rho=rho)

    @classmethod
    def power(cls, c: float, p: float) -> "ErrorSchedule":
        return cls("power", c=c, p=p)

    @classmethod
    def zero(cls) -> "ErrorSchedule":
        return cls("zero", c=0.0)

    def value(self, k: int) -> float:
        if k < 1:
            raise ValueError(f"tolerances are indexed from k=1, got {k}")
        if self.kind == "geometric":
            return self.c * self.rho ** k
        if self.kind == "power":
            return self.c * float(k) ** (-self.p)
        return 0.0

    def values(self, k: int) -> tuple[float, float]:
        alpha = self.value(k)
        beta = alpha if self.beta is None else self.beta.value(k)
        return alpha, beta

    def _tail(self, K: int) -> float:
        """Upper bound on ``sum_{k > K} value(k)`` (closed form)."""
        if self.kind == "zero" or self.c == 0:
            return 0.0
        if self.kind == "geometric":
            return self.c * self.rho ** (K + 1) / (1 - self.rho)
        # sum_{k>K} k^-p <= integral_K^inf t^-p dt for K >= 1; first term kept when K = 0
        if K == 0:
            return self.c * (1 + 1 / (self.p - 1))
        return self.c * K ** (1 - self.p) / (self.p - 1)

    def tail_bound(self, K: int = 0) -> float:
        """Certificate for summability: bounds ``sum_{k > K} (alpha_k + beta_k)``."""
        other = self if self.beta is None else self.beta
        return self._tail(K) + other._tail(K)

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind, "c": self.c}
        if self.kind == "geometric":
            d["rho"] = self.rho
        elif self.kind == "power":
            d["p"] = self.p
        if self.beta is not None:
            d = {"alpha": d, "beta": self.beta.to_dict()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorSchedule":
        if "alpha" in d or "beta" in d:
            if "alpha" not in d or "beta" not in d:
                raise ValueError("separate schedules need both 'alpha' and 'beta'")
            alpha = cls.from_dict(d["alpha"])
            return cls(alpha.kind, alpha.c, alpha.rho, alpha.p, beta=cls.from_dict(d["beta"]))
        kind = d.get("kind", "geometric")
        unknown = set(d) - {"kind", "c", "rho", "p"}
        if unknown:
            raise ValueError(f"unknown schedule key(s): {', '.join(sorted(unknown))}")
        if kind == "zero":
            return cls.zero()
        kw = {k: float(d[k]) for k in ("c", "rho", "p") if k in d}
        return cls(kind, **kw)


def schedule_values(schedule: ErrorSchedule, k: int) -> tuple[float, float]:
    """``(alpha_k, beta_k)`` for iteration ``k >= 1``."""
    return schedule.values(k)


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1.0
    schedule: ErrorSchedule = field(default_factory=ErrorSchedule)
    max_iter: int = 1000
    stop_tol: float = 1e-8
    inexactness_mode: str = "exact"
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.stop_tol > 0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError(f"max_iter must be a positive integer, got {self.max_iter}")
        if self.inexactness_mode not in INEXACTNESS_MODES:
            raise ValueError(f"inexactness_mode must be one of {INEXACTNESS_MODES}, "
                             f"got {self.inexactness_mode!r}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True, eq=False)
class IterateRecord:
    """Complete state of iteration k (all vectors read-only)."""

    k: int
    x_prev: np.ndarray
    b_prev: np.ndarray
    y_k: np.ndarray
    a_k: np.ndarray
    x_k: np.ndarray
    b_k: np.ndarray
    yhat_k: np.ndarray
    ahat_k: np.ndarray
    xhat_k: np.ndarray
    bhat_k: np.ndarray
    alpha_k: float
    beta_k: float
    res_s1: float
    res_s2: float
    res_primal: float
    res_dual: float
    shadow_z: np.ndarray

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if isinstance(val, np.ndarray):
                val.setflags(write=False)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _unit(direction: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(direction)
    if nrm == 0.0:
        e = np.zeros_like(direction)
        e[0] = 1.0
        return e
    return direction / nrm


def _perturbation(mode: str, radius: float, direction: np.ndarray,
                  rng: np.random.Generator) -> Optional[np.ndarray]:
    if mode == "exact" or radius == 0.0:
        return None
    if mode == "adversarial_boundary":
        return radius * _unit(direction)
    n = direction.size
    g = rng.standard_normal(n)
    return radius * rng.random() ** (1.0 / n) * _unit(g)


def init(config: SolverConfig, B: OperatorSpec, x0) -> GraphPair:
    """Starting pair ``(x0, b0)`` in the graph of B.

    ``b0`` is ``B(x0)`` for single-valued B and the minimal-norm element of
    ``B(x0)`` otherwise.
    """
    x0 = as_vector(x0, "x0")
    if x0.size != B.dim:
        raise DimensionError(f"x0 has dimension {x0.size}, problem dimension is {B.dim}")
    try:
        b0 = evaluate(B, x0)
    except DomainError as exc:
        raise DomainError(f"x0 is outside the domain of B ({exc}); project x0 onto dom B, "
                          f"e.g. start from the resolvent of B at x0") from None
    return GraphPair(x0, _freeze(b0))


def dr_step(config: SolverConfig, A: OperatorSpec, B: OperatorSpec, prev: GraphPair, k: int,
            rng: Optional[np.random.Generator] = None) -> IterateRecord:
    """One inexact Douglas-Rachford iteration from ``prev = (x_{k-1}, b_{k-1})``."""
    lam = config.lam
    x_prev, b_prev = (np.asarray(u, dtype=np.float64) for u in prev)
    scale = 1.0 + float(np.linalg.norm(x_prev)) + lam * float(np.linalg.norm(b_prev))

    memb = membership_residual(B, prev)
    if not memb <= MEMBERSHIP_RTOL * scale:
        raise ContractError(f"iteration {k}: previous pair is not in the graph of B "
                            f"(membership residual {memb:.3e})")
    alpha, beta = config.schedule.values(k)
    if rng is None:
        rng = np.random.default_rng([config.seed, k])
    mode = config.inexactness_mode

    z_a = x_prev - lam * b_prev
    yhat, ahat = resolve(A, lam, z_a)
    xhat, bhat = resolve(B, lam, yhat + lam * b_prev)

    e_a = _perturbation(mode, alpha, x_prev - yhat, rng)
    y, a = (yhat, ahat) if e_a is None else resolve(A, lam, z_a + e_a)

    z_b = y + lam * b_prev
    e_b = _perturbation(mode, beta, x_prev - xhat, rng)
    if e_a is None and e_b is None:
        x, b = xhat, bhat
    else:
        x, b = resolve(B, lam, z_b if e_b is None else z_b + e_b)

    res_s1 = float(np.linalg.norm(y + lam * a - z_a))
    res_s2 = float(np.linalg.norm(x + lam * b - z_b))
    res_e1 = float(np.linalg.norm(yhat + lam * ahat - z_a))
    res_e2 = float(np.linalg.norm(xhat + lam * bhat - (yhat + lam * b_prev)))
    slack = IDENTITY_RTOL * scale
    if res_s1 > alpha + slack or res_s2 > beta + slack:
        raise ContractError(f"iteration {k}: step residuals ({res_s1:.3e}, {res_s2:.3e}) exceed "
                            f"tolerances ({alpha:.3e}, {beta:.3e})")
    if res_e1 > slack or res_e2 > slack:
        raise ContractError(f"iteration {k}: companion equations violated "
                            f"({res_e1:.3e}, {res_e2:.3e})")

    return IterateRecord(
        k=k, x_prev=_freeze(x_prev), b_prev=_freeze(b_prev),
        y_k=_freeze(y), a_k=_freeze(a), x_k=_freeze(x), b_k=_freeze(b),
        yhat_k=_freeze(yhat), ahat_k=_freeze(ahat), xhat_k=_freeze(xhat), bhat_k=_freeze(bhat),
        alpha_k=alpha, beta_k=beta, res_s1=res_s1, res_s2=res_s2,
        res_primal=float(np.linalg.norm(x_prev - y)),
        res_dual=float(np.linalg.norm(a + b_prev)),
        shadow_z=_freeze(x + lam * b),
    )


@dataclass
class SolveResult:
    trace: list
    status: str            # "converged", "max_iter" or "failed"
    message: str = ""

    @property
    def final(self) -> Optional[IterateRecord]:
        return self.trace[-1] if self.trace else None


def solve(config: SolverConfig, A: OperatorSpec, B: OperatorSpec, x0, b0=None) -> SolveResult:
    """Run the iteration until the residuals drop below ``config.stop_tol``.

    Converged means ``max(||x_{k-1} - y_k||, ||a_k + b_{k-1}||) <= stop_tol``;
    in inexact modes additionally ``alpha_k + beta_k <= stop_tol``. When `x0`
    lies outside ``dom B`` the start is moved to the resolvent of B at `x0`.
    """
    if A.dim != B.dim:
        raise DimensionError(f"A acts on R^{A.dim} but B on R^{B.dim}")
    if b0 is not None:
        start = GraphPair(as_vector(x0, "x0"), as_vector(b0, "b0"))
    else:
        try:
            start = init(config, B, x0)
        except DomainError:
            start = resolve(B, config.lam, as_vector(x0, "x0"))
            logger.info("x0 outside dom B; starting from its B-resolvent %s", start.x)

    rng = np.random.default_rng(config.seed)
    trace: list = []
    prev = start
    guard = config.inexactness_mode != "exact"
    for k in range(1, config.max_iter + 1):
        try:
            rec = dr_step(config, A, B, prev, k, rng)
        except (ContractError, DomainError, RuntimeError, ValueError) as exc:
            msg = str(exc)
            if not msg.startswith(f"iteration {k}:"):
                msg = f"iteration {k}: {msg}"
            logger.warning("%s", msg)
            return SolveResult(trace, "failed", msg)
        trace.append(rec)
        prev = GraphPair(rec.x_k, rec.b_k)
        if (max(rec.res_primal, rec.res_dual) <= config.stop_tol
                and (not guard or rec.alpha_k + rec.beta_k <= config.stop_tol)):
            return SolveResult(trace, "converged")
    return SolveResult(trace, "max_iter")
