import numpy as np
import pytest

from delegation import discretize_measure, first_best_payoff, integrate, uniform_linear_problem
from delegation.cert import Ray1DMeasure, check_majorization_1d
from delegation.errors import ConstructionError, DomainError
from delegation.lp import (INFEASIBLE, OPTIMAL, XGrid, build_feasibility_lp, build_primal_lp,
                           complementary_slackness, convex_order_battery, duality_gap, export_lp,
                           extract_dual_certificate, inflate_domain, make_x_grid, solve_lp)
from delegation.model import Box, DelegationProblem, LinearBias, Uniform

ONE_OVER_108 = 1.0 / 108.0


@pytest.fixture(scope="module")
def benchmark_solution(uniform1d):
    mu = discretize_measure(uniform1d, 241)
    inst = build_primal_lp(uniform1d, mu, 3.0)
    sol = solve_lp(inst)
    assert sol.status == OPTIMAL
    return mu, inst, sol


def test_inflate_domain_examples(uniform1d):
    assert inflate_domain(uniform1d, 3.0) == Box((-1.5,), (1.5,))
    with pytest.warns(UserWarning):
        assert inflate_domain(uniform1d, 1.0) == uniform1d.state_space
    box = Box.cube(0.0, 1.0, 2)
    prob = DelegationProblem(box, Uniform(box), LinearBias(0.5))
    assert inflate_domain(prob, 2.0) == Box.cube(-0.5, 1.5, 2)
    with pytest.raises(DomainError):
        inflate_domain(prob, 0.5)


def test_row_counts_1d(uniform1d):
    mu = discretize_measure(uniform1d, 41)
    inst = build_primal_lp(uniform1d, mu, 3.0)
    assert len(inst.grid) == 121
    assert inst.convexity_rows.size == 119 and inst.bound_rows.size == 121
    assert inst.n_rows == 240


def test_row_counts_2d(uniform2d):
    mu = discretize_measure(uniform2d, 5)
    inst = build_primal_lp(uniform2d, mu, 3.0)
    assert inst.grid.shape == (13, 13)
    assert inst.n_vars == 169 + 338
    assert inst.convexity_rows.size == 169 * 168


def test_measure_nodes_must_lie_on_grid(uniform1d):
    mu = discretize_measure(uniform1d, 11)
    with pytest.raises(ConstructionError):
        build_primal_lp(uniform1d, mu, XGrid([np.linspace(-1.5, 1.5, 8)]))


def test_full_delegation_objective_is_zero(uniform1d):
    mu = discretize_measure(uniform1d, 241)
    inst = build_primal_lp(uniform1d, mu, 3.0)
    assert abs(inst.objective_of(inst.h_values)) <= 1e-4


def test_benchmark_optimum(benchmark_solution):
    mu, inst, sol = benchmark_solution
    assert sol.objective == pytest.approx(ONE_OVER_108, abs=1e-5)
    gamma = extract_dual_certificate(inst, sol)
    gap = duality_gap(uniform_linear_problem(1), sol, mu, gamma)
    assert abs(gap) <= 1e-7 * mu.total_variation
    cs1, cs2 = complementary_slackness(uniform_linear_problem(1), sol, mu, gamma)
    assert cs1 <= 1e-8 * (1 + abs(sol.objective)) and cs2 <= 1e-8 * (1 + abs(sol.objective))


def test_primal_feasibility_of_optimum(benchmark_solution):
    _, inst, sol = benchmark_solution
    resid = inst.matrix @ sol.x - inst.rhs
    assert float(np.max(resid)) <= 1e-8


def test_gamma_support_is_in_contact_set(benchmark_solution):
    mu, inst, sol = benchmark_solution
    gamma = extract_dual_certificate(inst, sol)
    support = gamma.nodes[gamma.weights > 0]
    gap = first_best_payoff(uniform_linear_problem(1), support) - sol.values[gamma.weights > 0]
    assert np.max(np.abs(gap)) <= 1e-9
    assert np.min(support) >= -1 / 6 - 1e-9 and np.max(support) <= 1 / 6 + 1e-9
    assert np.all(gamma.weights >= 0)


def test_convex_order_of_certificate(benchmark_solution, rng):
    mu, inst, sol = benchmark_solution
    gamma = extract_dual_certificate(inst, sol)
    passed, worst = convex_order_battery(gamma, mu, rng, count=200, tol=1e-8)
    assert passed, worst
    # exact one-dimensional route: mu - gamma must be dominated by the zero measure
    pts = np.concatenate([mu.nodes[:, 0], gamma.nodes[:, 0]])
    w = np.concatenate([mu.weights, -gamma.weights])
    ray = Ray1DMeasure.from_points(pts[:, None], w, np.zeros(1), np.ones(1))
    assert check_majorization_1d(ray, 0.0, 0.0, tol=1e-8, scale=mu.total_variation).passed


def test_battery_rejects_mu_against_itself_shifted(uniform1d, rng):
    mu = discretize_measure(uniform1d, 41)
    shifted = mu.scaled(1.0)
    shifted.nodes = mu.nodes + 0.05
    assert not convex_order_battery(shifted, mu, rng)[0]


def test_weak_duality_for_suboptimal_primal(benchmark_solution):
    mu, inst, sol = benchmark_solution
    gamma = extract_dual_certificate(inst, sol)
    low = lambda x: np.zeros(len(x))
    assert duality_gap(uniform_linear_problem(1), low, mu, gamma) > 1e-3


def test_positive_measure_gives_gamma_equal_mu():
    prob = uniform_linear_problem(1, alpha=1.0, kappa=1.0)
    mu = discretize_measure(prob, 61)
    inst = build_primal_lp(prob, mu, 3.0)
    sol = solve_lp(inst)
    assert sol.status == OPTIMAL
    pos = inst.node_weights > 0
    np.testing.assert_allclose(sol.values[pos], inst.h_values[pos], atol=1e-12)
    gamma = extract_dual_certificate(inst, sol)
    np.testing.assert_allclose(gamma.weights, inst.node_weights, atol=1e-12)
    assert abs(duality_gap(prob, sol, mu, gamma)) <= 1e-12


def test_zero_weights_give_zero_gamma(uniform1d):
    mu = discretize_measure(uniform1d, 21).scaled(0.0)
    inst = build_primal_lp(uniform1d, mu, 3.0)
    sol = solve_lp(inst)
    assert np.all(extract_dual_certificate(inst, sol).weights == 0)


def test_infeasible_instance_and_certificate_precondition(uniform1d):
    mu = discretize_measure(uniform1d, 11)
    grid = make_x_grid(mu, inflate_domain(uniform1d, 3.0))
    centre = grid.index_of(np.array([[0.0]]))
    inst = build_feasibility_lp(uniform1d, grid, centre, [1.0])
    sol = solve_lp(inst)
    assert sol.status == INFEASIBLE
    with pytest.raises(DomainError):
        extract_dual_certificate(inst, sol)


def test_inflation_stability(uniform1d, benchmark_solution):
    mu, _, sol = benchmark_solution
    wide = solve_lp(build_primal_lp(uniform1d, mu, 4.5))
    assert abs(wide.objective - sol.objective) <= 1e-6


def test_refinement_halves_error(uniform1d):
    errs = []
    for k in (61, 121, 241):
        mu = discretize_measure(uniform1d, k)
        errs.append(abs(solve_lp(build_primal_lp(uniform1d, mu, 3.0)).objective - ONE_OVER_108))
    assert errs[1] <= 0.5 * errs[0] and errs[2] <= 0.5 * errs[1]


def test_simplex_is_deterministic(uniform1d):
    mu = discretize_measure(uniform1d, 61)
    a = solve_lp(build_primal_lp(uniform1d, mu, 3.0))
    b = solve_lp(build_primal_lp(uniform1d, mu, 3.0))
    assert a.x.tobytes() == b.x.tobytes() and a.duals.tobytes() == b.duals.tobytes()


def test_highs_cross_check(uniform1d):
    mu = discretize_measure(uniform1d, 61)
    inst = build_primal_lp(uniform1d, mu, 3.0)
    ours, theirs = solve_lp(inst), solve_lp(inst, method="highs")
    assert ours.objective == pytest.approx(theirs.objective, abs=1e-10)


def test_two_dimensional_lp(uniform2d, rng):
    mu = discretize_measure(uniform2d, 5)
    inst = build_primal_lp(uniform2d, mu, 1.5)
    sol = solve_lp(inst)
    assert sol.status == OPTIMAL
    gamma = extract_dual_certificate(inst, sol)
    assert abs(duality_gap(uniform2d, sol, mu, gamma)) <= 1e-8
    assert convex_order_battery(gamma, mu, rng)[0]
    # pairwise subgradient rows hold at the optimum
    assert float(np.max(inst.matrix @ sol.x - inst.rhs)) <= 1e-8
    # the optimum beats full delegation and no delegation
    assert sol.objective >= integrate(mu, first_best_payoff(uniform2d, mu.nodes)) - 1e-12
    assert sol.objective >= -1e-12


def test_export_lp_text(uniform1d):
    mu = discretize_measure(uniform1d, 5)
    inst = build_primal_lp(uniform1d, mu, 3.0)
    text = export_lp(inst)
    assert text.startswith("\\") and text.rstrip().endswith("End")
    assert text.count(" <= ") >= inst.n_rows
    assert export_lp(inst) == text
