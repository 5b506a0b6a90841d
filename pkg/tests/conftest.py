import numpy as np
import pytest

from inexact_dr import operators as ops


def _rng_psd(rng, n, skew=True):
    R = rng.standard_normal((n, n)) / np.sqrt(n)
    M = R.T @ R
    if skew:
        G = rng.standard_normal((n, n))
        M = M + (G - G.T)
    return M


def operator_zoo(n=3, seed=0):
    """One instance of every operator kind on R^n."""
    rng = np.random.default_rng(seed)
    return {
        "affine_monotone": ops.affine_monotone(_rng_psd(rng, n), rng.standard_normal(n)),
        "subdiff_l1": ops.subdiff_l1(rng.uniform(0.2, 2.0, n)),
        "normal_cone_box": ops.normal_cone_box(-rng.uniform(0, 1, n), rng.uniform(0, 1, n)),
        "normal_cone_halfspace": ops.normal_cone_halfspace(rng.standard_normal(n), 0.3),
        "normal_cone_affine": ops.normal_cone_affine(rng.standard_normal((max(1, n - 1), n)),
                                                     rng.standard_normal(max(1, n - 1))),
        "quadratic_gradient": ops.quadratic_gradient(_rng_psd(rng, n, skew=False),
                                                     rng.standard_normal(n)),
        "scaled_identity": ops.scaled_identity(1.7, dim=n),
        "zero": ops.zero(n),
        "sum_shift": ops.sum_shift(ops.subdiff_l1(0.5, dim=n), rng.standard_normal(n)),
    }


@pytest.fixture
def zoo():
    return operator_zoo()


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
