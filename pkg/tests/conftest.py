"""Shared fixtures: the canonical two-fund market and one coarse solve."""

import pytest

from hwmruin import ModelParams, PiBox, SolverConfig, howard_solve

# r=0.02, c=1, R=10: safe level c/r = 50, never-invest exponent lam/r = 2
CANON = dict(
    r=0.02, c=1.0, ruin_level=10.0, default_rate=0.04,
    mu=(0.07, 0.05), sigma=((0.20, 0.0), (0.05, 0.15)),
)


@pytest.fixture(scope="session")
def params():
    """General model: fees, benchmark gap, unit ambiguity budget."""
    return ModelParams(**CANON, mu_b=(0.03, 0.02), q=(0.2, 0.2), eps=1.0)


@pytest.fixture(scope="session")
def frictionless():
    """No fees, benchmark equal to the funds (mu_b, sigma_b default)."""
    return ModelParams(**CANON)


@pytest.fixture(scope="session")
def small_solution(params):
    """One converged general solve on a coarse grid, shared read-only."""
    cfg = SolverConfig(pi_set=PiBox.symmetric(5.0, n=11), nx=41, ny1=9, ny2=9)
    sol = howard_solve(params, cfg)
    assert sol.report.converged
    return sol
