import numpy as np
import pytest

from delegation import (BoundaryCurve, ConvexDelegationSet, ProductSet, check_convex_delegation,
                        delegation_set_payoff, interval_value, product_set_payoff_uniform,
                        solve_boundary, symmetry_residual, uniform_linear_problem)
from delegation.boundary2d import RayDisintegration
from delegation.cert import binned_ray_moments
from delegation.errors import ConstructionError, DomainError, PreconditionError


def _grid_payoff(problem, mechanism, cells=600):
    """Midpoint rule over S, an independent route to the expected payoff."""
    g = (np.arange(cells) + 0.5) / cells - 0.5
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    return float(np.mean(mechanism.principal_payoff(problem, pts)))


def test_converged_boundary_is_symmetric(solved_boundary):
    assert symmetry_residual(solved_boundary.curve) <= 1e-3


def test_converged_boundary_is_convex_and_inside(uniform2d, solved_boundary):
    curve = solved_boundary.curve
    assert curve.is_strictly_convex()
    assert curve.inside_box(uniform2d.state_space)
    assert solved_boundary.max_residual <= 1e-3


def test_restart_from_converged_curve_does_not_move(uniform2d, solved_boundary):
    again = solve_boundary(uniform2d, solved_boundary.curve, max_iters=5, tol=1e-3)
    assert again.iterations == 0 and again.first_sweep_movement == 0.0
    assert again.curve.vertices.tobytes() == solved_boundary.curve.vertices.tobytes()


def test_converged_boundary_passes_certificate(uniform2d, solved_boundary):
    rep = check_convex_delegation(uniform2d, solved_boundary.curve, tol=5e-3)
    assert rep.passed, rep.failures


def test_near_square_circle_fails_certificate(uniform2d):
    rep = check_convex_delegation(uniform2d, BoundaryCurve.circle(0.49, 64), tol=5e-3)
    assert not rep.passed
    assert "ray first moments not zero" in rep.failures


def test_aligned_preferences_delegate_everything():
    prob = uniform_linear_problem(2, alpha=1.0)
    rep = check_convex_delegation(prob, None)
    assert rep.passed and rep.residuals.size == 0
    assert rep.min_nu == pytest.approx(1.0)


def test_delegating_beats_best_product_set(uniform2d, solved_boundary):
    ours = delegation_set_payoff(uniform2d, solved_boundary.curve)
    product = product_set_payoff_uniform(uniform2d, 1 / 6)
    assert ours > product


def test_exact_payoff_matches_grid_quadrature(uniform2d, solved_boundary):
    for curve in (BoundaryCurve.circle(0.2, 64), solved_boundary.curve):
        exact = delegation_set_payoff(uniform2d, curve)
        grid = _grid_payoff(uniform2d, ConvexDelegationSet(curve))
        assert exact == pytest.approx(grid, abs=2e-6)


def test_circle_payoff_closed_form(uniform2d):
    # delegating to a disc of radius r inside [-1/2, 1/2]^2 with alpha = 1/2:
    # inside the payoff density is 0; outside it is r|s|/2 - r^2/2
    r = 0.2
    big = BoundaryCurve.circle(r, 4096)
    cells = 1200
    g = (np.arange(cells) + 0.5) / cells - 0.5
    s = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    rad = np.linalg.norm(s, axis=1)
    closed = float(np.mean(np.where(rad > r, 0.5 * r * rad - 0.5 * r * r, 0.0)))
    assert delegation_set_payoff(uniform2d, big) == pytest.approx(closed, abs=2e-6)


def test_product_set_closed_form(uniform2d, uniform1d):
    for t in (0.1, 1 / 6, 0.3, 0.5):
        assert product_set_payoff_uniform(uniform2d, t) == pytest.approx(
            2 * interval_value(uniform1d, -t, t), abs=1e-14)
        grid = _grid_payoff(uniform2d, ProductSet(np.full(2, -t), np.full(2, t)), cells=400)
        assert product_set_payoff_uniform(uniform2d, t) == pytest.approx(grid, abs=2e-6)


def test_sectors_tile_the_complement(uniform2d):
    curve = BoundaryCurve.circle(0.3, 48, center=(0.02, -0.01))
    dis = RayDisintegration(uniform2d)
    V, normals = curve.vertices, curve.normals()
    outside = sum(dis.moments(V, k, normals[k])[2] for k in range(len(curve)))
    inside = dis.nu_const * curve.area()
    # total mass of mu is kappa = 1
    assert outside + inside == pytest.approx(1.0, abs=1e-12)


def test_binned_cross_check_shrinks_with_refinement(uniform2d, solved_boundary):
    coarse = np.max(np.abs(binned_ray_moments(uniform2d, solved_boundary.curve, 17)))
    fine = np.max(np.abs(binned_ray_moments(uniform2d, solved_boundary.curve, 65)))
    assert fine < coarse


def test_solver_input_errors(uniform2d, uniform1d):
    with pytest.raises(DomainError):
        solve_boundary(uniform2d, BoundaryCurve.circle(0.6, 64))
    with pytest.raises(PreconditionError):
        solve_boundary(uniform1d, BoundaryCurve.circle(0.2, 64))
    with pytest.raises(PreconditionError):
        solve_boundary(uniform_linear_problem(2, alpha=1.0), BoundaryCurve.circle(0.2, 64))
    with pytest.raises(ConstructionError):
        BoundaryCurve.circle(0.2, 8)
    square_ish = np.array([[np.cos(a), np.sin(a)] for a in np.linspace(0, 2 * np.pi, 20,
                                                                       endpoint=False)]) * 0.2
    square_ish[3] *= 0.5  # dent
    with pytest.raises(DomainError):
        BoundaryCurve(square_ish)


def test_not_converged_status(uniform2d):
    res = solve_boundary(uniform2d, BoundaryCurve.circle(0.2, 32), max_iters=2, tol=1e-12)
    assert not res.converged and res.iterations == 2
    assert len(res.history) == 3


@pytest.mark.slow
def test_vertex_doubling_changes_area_little(uniform2d, solved_boundary):
    V = solved_boundary.curve.vertices
    c = V.mean(axis=0)
    W = np.empty((2 * len(V), 2))
    W[0::2] = V
    W[1::2] = c + 1.0005 * (0.5 * (V + np.roll(V, -1, axis=0)) - c)
    fine = solve_boundary(uniform2d, BoundaryCurve(W), max_iters=400, tol=1e-3, threads=4)
    assert fine.converged
    assert abs(fine.curve.area() / solved_boundary.curve.area() - 1) <= 0.01


@pytest.mark.slow
def test_nearly_aligned_preferences_push_boundary_out():
    prob = uniform_linear_problem(2, alpha=0.95)
    res = solve_boundary(prob, BoundaryCurve.circle(0.2, 64), max_iters=400, tol=1e-3, threads=4)
    assert res.converged
    assert 0.5 - float(np.max(np.abs(res.curve.vertices))) < 0.05
