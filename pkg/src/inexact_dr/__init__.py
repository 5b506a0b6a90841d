"""Inexact Douglas-Rachford splitting for monotone inclusions ``0 in A(x) + B(x)``."""

from .diagnostics import (CheckReport, FitzpatrickEstimate, SolutionPair, check_graph_closure,
                          check_lemma_bas, check_quasi_fejer, check_summability_bound,
                          fitzpatrick_estimate, solution_residual)
from .drm import ErrorSchedule, IterateRecord, SolverConfig, dr_step, init, schedule_values, solve
from .hilbert import PairPoint, inner, lambda_inner, lambda_norm
from .operators import GraphPair, OperatorSpec, membership_residual, monotonicity_probe, resolve

__version__ = "0.1.0"
