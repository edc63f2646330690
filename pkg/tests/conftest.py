import numpy as np
import pytest

from delegation import (AffineBias, BoundaryCurve, Box, DelegationProblem, Uniform,
                        solve_boundary, uniform_linear_problem)


@pytest.fixture(scope="session")
def uniform1d():
    return uniform_linear_problem(1, alpha=0.5, kappa=1.0)


@pytest.fixture(scope="session")
def affine1d():
    box = Box((0.0,), (1.0,))
    return DelegationProblem(box, Uniform(box), AffineBias(0.1))


@pytest.fixture(scope="session")
def uniform2d():
    return uniform_linear_problem(2, alpha=0.5, kappa=1.0)


@pytest.fixture(scope="session")
def solved_boundary(uniform2d):
    """Converged 64-vertex boundary for the 2D uniform problem (about 15 s)."""
    res = solve_boundary(uniform2d, BoundaryCurve.circle(0.2, 64), max_iters=400, tol=1e-3)
    assert res.converged
    return res


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
