"""Vector arithmetic in H = R^n and in the lambda-weighted product space H x H.

Vectors are plain one-dimensional ``numpy`` float arrays. Functions here
never mutate their arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Operands live in spaces of different dimension (or weight)."""


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Return a read-only float64 copy of `values`, validated as a point of H."""
    arr = np.atleast_1d(np.array(values, dtype=np.float64))
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_dims(u: np.ndarray, w: np.ndarray) -> None:
    if u.shape != w.shape:
        raise DimensionError(f"dimension mismatch: {u.size} vs {w.size}")


def inner(u, w) -> float:
    """Euclidean inner product of two vectors of equal length."""
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    _check_dims(u, w)
    return float(np.dot(u, w))


def norm(u) -> float:
    return float(np.linalg.norm(np.asarray(u, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class PairPoint:
    """An element (x, v) of H x H carrying the weight lambda of its inner product.

    The inner product is ``<x, x'> + lambda**2 <v, v'>``.
    """

    x: np.ndarray
    v: np.ndarray
    lam: float

    def __post_init__(self):
        x = as_vector(self.x, "x")
        v = as_vector(self.v, "v")
        if x.shape != v.shape:
            raise DimensionError(f"pair components differ in dimension: {x.size} vs {v.size}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lam", float(self.lam))

    def _same_space(self, other: "PairPoint") -> None:
        if self.lam != other.lam:
            raise DimensionError(f"pairs use different weights: lambda={self.lam} vs {other.lam}")
        _check_dims(self.x, other.x)

    def __add__(self, other: "PairPoint") -> "PairPoint":
        self._same_space(other)
        return PairPoint(self.x + other.x, self.v + other.v, self.lam)

    def __sub__(self, other: "PairPoint") -> "PairPoint":
        self._same_space(other)
        return PairPoint(self.x - other.x, self.v - other.v, self.lam)

    def scale(self, t: float) -> "PairPoint":
        return PairPoint(t * self.x, t * self.v, self.lam)


def lambda_inner(p: PairPoint, q: PairPoint) -> float:
    """Weighted inner product ``<p.x, q.x> + lambda**2 <p.v, q.v>``."""
    p._same_space(q)
    return inner(p.x, q.x) + p.lam ** 2 * inner(p.v, q.v)


def lambda_norm(p: PairPoint) -> float:
    # hypot avoids cancellation and overflow when one component dominates
    return math.hypot(norm(p.x), p.lam * norm(p.v))


def pair_distance(x, v, x_ref, v_ref, lam: float) -> float:
    """``lambda_norm`` of (x - x_ref, v - v_ref) without building PairPoints.

    Used in per-iteration loops where the validation in ``PairPoint`` would
    dominate the cost.
    """
    dx = np.asarray(x) - np.asarray(x_ref)
    dv = np.asarray(v) - np.asarray(v_ref)
    return math.hypot(float(np.linalg.norm(dx)), lam * float(np.linalg.norm(dv)))
