
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delegation import (Box, DelegationProblem, Menu, Uniform, build_gamma_from_partition,
                        check_interval_delegation, check_logconcave_bias, check_majorization_1d,
                        check_theorem1, constant_menu, discretize_measure, extract_partition,
                        find_optimal_interval, interval_menu_on_nodes, interval_value,
                        lower_tail_residual, uniform_linear_problem, upper_tail_residual)
from delegation.cert import Ray1DMeasure, stop_loss_profile
from delegation.errors import DomainError, PreconditionError, UnsupportedRegionError
from delegation.lp import build_primal_lp, convex_order_battery, duality_gap, solve_lp
from delegation.measure import SignedMeasureGrid
from delegation.model import AffineBias, NormalMixture, TruncatedNormal, first_best_payoff

SIXTH = 1.0 / 6.0


@pytest.fixture(scope="module")
def bench(uniform1d):
    mu = discretize_measure(uniform1d, 241)
    return mu, mu.axes[0]


def _right_pool(cells=3000):
    """Density 1.5 on (1/6, 1/2) by exact midpoint cells plus the atom -0.25 at 1/2."""
    edges = np.linspace(SIXTH, 0.5, cells + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    pts = np.concatenate([mids, [0.5]])
    w = np.concatenate([1.5 * np.diff(edges), [-0.25]])
    return Ray1DMeasure(pts, w, np.zeros(1), np.ones(1))


# --------------------------------------------------------------------------
# partitions


def test_interval_partition(uniform1d, bench):
    mu, nodes = bench
    part = extract_partition(uniform1d, interval_menu_on_nodes(uniform1d, -SIXTH, SIXTH, nodes),
                             mu)
    pools = [r for r in part.regions if len(np.unique(mu.nodes[r.entries])) > 1]
    assert len(pools) == 2
    left, right = sorted(pools, key=lambda r: r.action[0])
    assert mu.nodes[left.entries].min() == -0.5 and mu.nodes[left.entries].max() == pytest.approx(-SIXTH)
    assert mu.nodes[right.entries].min() == pytest.approx(SIXTH) and mu.nodes[right.entries].max() == 0.5
    assert left.touch_point[0] == pytest.approx(-SIXTH) and right.touch_point[0] == pytest.approx(SIXTH)
    singles = [r for r in part.regions if r not in pools]
    assert len(singles) == 79  # interior nodes strictly between -1/6 and 1/6
    covered = np.sort(np.concatenate([r.entries for r in part.regions]))
    np.testing.assert_array_equal(covered, np.arange(len(mu.weights)))


def test_full_delegation_partition(uniform1d, bench):
    mu, nodes = bench
    part = extract_partition(uniform1d, interval_menu_on_nodes(uniform1d, -0.5, 0.5, nodes), mu)
    assert len(part.regions) == 241
    assert all(r.touch_point is not None for r in part.regions)


def test_constant_menu_partition(uniform1d, bench):
    mu, _ = bench
    part = extract_partition(uniform1d, constant_menu(uniform1d), mu)
    assert len(part.regions) == 1
    assert part.regions[0].touch_point[0] == 0.0


# --------------------------------------------------------------------------
# majorization


def test_point_mass_against_itself():
    ray = Ray1DMeasure([0.3], [2.0], np.zeros(1), np.ones(1))
    v = check_majorization_1d(ray, 2.0, 0.3)
    assert v.passed and v.worst == 0.0


def test_right_pool_example():
    ray = _right_pool()
    assert ray.mass == pytest.approx(0.25, abs=1e-12)
    assert ray.moment / ray.mass == pytest.approx(SIXTH, abs=1e-12)
    assert check_majorization_1d(ray, 0.25, SIXTH, tol=1e-9).passed
    wrong = check_majorization_1d(ray, 0.25, 0.25, tol=1e-9)
    assert not wrong.passed and "barycenter" in wrong.reason


def test_stop_loss_profile_matches_closed_form():
    ray = _right_pool(6000)
    taus = np.array([0.2, 0.3, 0.4])
    # int_tau^1/2 1.5 (x - tau) dx - 0.25 (1/2 - tau), the atom at 1/6 lies below every tau
    exact = 0.75 * (0.5 - taus) ** 2 - 0.25 * (0.5 - taus)
    np.testing.assert_allclose(stop_loss_profile(ray, 0.25, SIXTH, taus), exact, atol=1e-8)


def test_ray_measure_validation():
    with pytest.raises(DomainError):
        Ray1DMeasure([0.2, 0.1], [1.0, 1.0], np.zeros(1), np.ones(1))
    with pytest.raises(DomainError):
        Ray1DMeasure([0.1], [np.inf], np.zeros(1), np.ones(1))


def _random_pair(rng):
    """Atom m at z plus mean-preserving spreads added (+) or removed (-)."""
    m, z = rng.uniform(0.5, 2.0), int(rng.integers(3, 7))
    w = np.zeros(10)
    w[z] += m
    for _ in range(int(rng.integers(1, 4))):
        x, d = int(rng.integers(2, 8)), int(rng.integers(1, 3))
        amp = rng.uniform(0.05, 0.3) * (1 if rng.random() < 0.6 else -1)
        # amp * (delta_x - spread): positive amp contracts, so mu stays below the atom
        w[x] += amp
        w[x - d] -= amp / 2
        w[x + d] -= amp / 2
    return w, m, float(z)


def test_majorization_agrees_with_battery():
    rng = np.random.default_rng(2024)
    outcomes = set()
    for _ in range(100):
        w, m, z = _random_pair(rng)
        keep = w != 0
        pts = np.arange(10.0)[keep]
        ray = Ray1DMeasure(pts, w[keep], np.zeros(1), np.ones(1))
        exact = check_majorization_1d(ray, m, z, tol=1e-12).passed
        mu = SignedMeasureGrid(pts[:, None], w[keep], False, 0.0)
        gamma = SignedMeasureGrid(np.array([[z]]), np.array([m]), False, 0.0)
        battery = convex_order_battery(gamma, mu, rng, count=400, tol=1e-12)[0]
        assert exact == battery
        outcomes.add(exact)
    assert outcomes == {True, False}


@settings(max_examples=40, deadline=None)
@given(c=st.floats(1e-3, 1e3))
def test_scale_covariance(uniform1d, bench, c):
    mu, nodes = bench
    for menu in (interval_menu_on_nodes(uniform1d, -SIXTH, SIXTH, nodes),
                 interval_menu_on_nodes(uniform1d, -1 / 3, 1 / 3, nodes)):
        base = check_theorem1(uniform1d, menu, mu)
        scaled = check_theorem1(uniform1d, menu, mu.scaled(c))
        assert base.passed == scaled.passed
        assert scaled.worst_residual == pytest.approx(c * base.worst_residual, rel=1e-9, abs=1e-15 * c)


# --------------------------------------------------------------------------
# the general certificate


def test_theorem1_examples(uniform1d, bench):
    mu, nodes = bench
    good = check_theorem1(uniform1d, interval_menu_on_nodes(uniform1d, -SIXTH, SIXTH, nodes), mu)
    assert good.passed
    assert abs(good.duality_gap) <= 1e-12
    bad = check_theorem1(uniform1d, interval_menu_on_nodes(uniform1d, -1 / 3, 1 / 3, nodes), mu)
    assert not bad.passed
    assert all("barycenter" in r.reason for r in bad.failing())
    const = check_theorem1(uniform1d, constant_menu(uniform1d), mu)
    assert not const.passed
    assert const.regions[0].mass == pytest.approx(1.0, abs=1e-12)
    assert "stop-loss" in const.regions[0].reason


def test_theorem1_rejects_infeasible_menu(uniform1d, bench):
    with pytest.raises(DomainError):
        check_theorem1(uniform1d, Menu.from_pieces([(2.0, -1.6)]), bench[0])


def test_theorem1_rejects_two_dimensional_region(uniform2d):
    mu = discretize_measure(uniform2d, 5)
    with pytest.raises(UnsupportedRegionError):
        check_theorem1(uniform2d, constant_menu(uniform2d), mu)


def test_certified_implies_optimal(uniform1d, bench):
    mu, nodes = bench
    menu = interval_menu_on_nodes(uniform1d, -SIXTH, SIXTH, nodes)
    rep = check_theorem1(uniform1d, menu, mu)
    gamma = build_gamma_from_partition(rep.details["partition"], mu)
    assert np.all(gamma.weights >= 0)
    U = lambda x: np.max(np.asarray(x) @ menu.actions.T + menu.intercepts, axis=-1)
    value = float(np.sum(mu.weights * U(mu.nodes)))
    assert abs(duality_gap(uniform1d, U, mu, gamma)) <= 1e-6 * (1 + abs(value))
    h_gamma = float(np.sum(gamma.weights * first_best_payoff(uniform1d, gamma.nodes)))
    assert h_gamma == pytest.approx(value, abs=1e-12)
    lp = solve_lp(build_primal_lp(uniform1d, mu, 3.0))
    assert lp.objective == pytest.approx(value, abs=1e-6 * (1 + abs(value)))
    # atoms of mass 0.25 sit at the pooling kinks
    at = lambda x: gamma.weights[np.argmin(np.abs(gamma.nodes[:, 0] - x))]
    assert at(SIXTH) == pytest.approx(0.25 + 0.75 / 240, abs=1e-12)
    assert at(-SIXTH) == pytest.approx(0.25 + 0.75 / 240, abs=1e-12)


def test_gamma_needs_certified_partition(uniform1d, bench):
    mu, _ = bench
    part = extract_partition(uniform1d, constant_menu(uniform1d), mu)
    with pytest.raises(DomainError):
        build_gamma_from_partition(part, mu)


def test_positive_measure_gives_gamma_mu():
    prob = uniform_linear_problem(1, alpha=1.0)
    mu = discretize_measure(prob, 61)
    rep = check_theorem1(prob, interval_menu_on_nodes(prob, -0.5, 0.5, mu.axes[0]), mu)
    assert rep.passed
    gamma = build_gamma_from_partition(rep.details["partition"], mu)
    agg_pts, agg_w = mu.aggregate()
    np.testing.assert_allclose(gamma.nodes, agg_pts, atol=1e-12)
    np.testing.assert_allclose(gamma.weights, agg_w, atol=1e-12)


def test_zero_measure_gives_zero_gamma(uniform1d, bench):
    mu, nodes = bench
    zero = mu.scaled(0.0)
    rep = check_theorem1(uniform1d, interval_menu_on_nodes(uniform1d, -SIXTH, SIXTH, nodes), zero)
    assert rep.passed
    assert np.all(build_gamma_from_partition(rep.details["partition"], zero).weights == 0)


def test_interval_and_general_certificates_agree(uniform1d, bench):
    mu, nodes = bench
    rng = np.random.default_rng(7)
    interior = nodes[1:-1]
    pairs = [(-SIXTH, SIXTH)]
    while len(pairs) < 50:
        a, b = np.sort(rng.choice(interior, 2, replace=False))
        pairs.append((float(a), float(b)))
    verdicts = []
    for s1, s2 in pairs:
        one = check_interval_delegation(uniform1d, s1, s2).passed
        gen = check_theorem1(uniform1d, interval_menu_on_nodes(uniform1d, s1, s2, nodes), mu).passed
        assert one == gen, (s1, s2)
        verdicts.append(one)
    assert verdicts[0] and not all(verdicts)


# --------------------------------------------------------------------------
# intervals


def test_interval_examples(uniform1d, affine1d):
    assert check_interval_delegation(uniform1d, -SIXTH, SIXTH).passed
    bad = check_interval_delegation(uniform1d, -1 / 3, 1 / 3)
    assert "upper equality violated at s2" in bad.failures
    # closed form of the equality residual at s2 = 1/3
    t = 1 / 3
    assert bad.upper_equality == pytest.approx(1.5 * (0.5 - t) ** 2 / 2 - 0.25 * (0.5 - t), abs=1e-12)
    assert check_interval_delegation(affine1d, 0.2, 1.0).passed
    with pytest.raises(DomainError):
        check_interval_delegation(uniform1d, 0.2, 0.1)


def test_tail_residuals_closed_form(uniform1d):
    s = np.linspace(-0.5, 0.5, 11)
    upper = 0.75 * (0.5 - s) ** 2 - 0.25 * (0.5 - s)
    np.testing.assert_allclose(upper_tail_residual(uniform1d, s), upper, atol=1e-13)
    np.testing.assert_allclose(lower_tail_residual(uniform1d, s), upper[::-1], atol=1e-13)


def test_find_optimal_interval_examples(uniform1d, affine1d):
    res = find_optimal_interval(uniform1d)
    assert res.s1 == pytest.approx(-SIXTH, abs=1e-10) and res.s2 == pytest.approx(SIXTH, abs=1e-10)
    assert res.report.passed
    full = find_optimal_interval(uniform_linear_problem(1, alpha=1.0))
    assert (full.s1, full.s2) == (-0.5, 0.5)
    res = find_optimal_interval(affine1d)
    assert res.s1 == pytest.approx(0.2, abs=1e-10) and res.s2 == 1.0


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.05, 0.95), kappa=st.floats(1.0, 2.0))
def test_upper_endpoint_formula(alpha, kappa):
    prob = uniform_linear_problem(1, alpha=alpha, kappa=kappa)
    res = find_optimal_interval(prob)
    s2 = alpha / (2 * (2 * kappa - alpha))
    assert res.s2 == pytest.approx(s2, abs=1e-9)
    assert res.s1 == pytest.approx(-s2, abs=1e-9)


def test_interval_value_examples(uniform1d):
    assert interval_value(uniform1d, -SIXTH, SIXTH) == pytest.approx(1 / 108, abs=1e-14)
    assert interval_value(uniform1d, -1 / 3, 1 / 3) == pytest.approx(1 / 216, abs=1e-14)


def test_interval_search_needs_one_dimension(uniform2d):
    with pytest.raises(PreconditionError):
        find_optimal_interval(uniform2d)


# --------------------------------------------------------------------------
# constant bias with logconcave densities


def test_logconcave_uniform(affine1d):
    v = check_logconcave_bias(affine1d)
    assert v.hypothesis_holds
    assert v.result.s1 == pytest.approx(0.2, abs=1e-10) and v.result.s2 == 1.0


def test_logconcave_truncated_normal_matches_lp():
    box = Box((-2.0,), (2.0,))
    prob = DelegationProblem(box, TruncatedNormal(box, (0.0,), (1.0,)), AffineBias(0.05))
    v = check_logconcave_bias(prob)
    assert v.hypothesis_holds and v.result.report.passed
    lp = solve_lp(build_primal_lp(prob, discretize_measure(prob, 241), 3.0))
    assert interval_value(prob, v.result.s1, v.result.s2) == pytest.approx(lp.objective, abs=1e-4)


def test_bimodal_mixture_fails_hypothesis():
    box = Box((-2.0,), (2.0,))
    prob = DelegationProblem(box, NormalMixture(box, (0.5, 0.5), (-1.0, 1.0), (0.3, 0.3)),
                             AffineBias(0.05))
    v = check_logconcave_bias(prob)
    assert not v.hypothesis_holds and v.result is None
    assert v.max_log_second_difference > 0


def test_logconcave_preconditions(uniform1d):
    with pytest.raises(PreconditionError):
        check_logconcave_bias(uniform1d)
    box = Box((0.0,), (1.0,))
    with pytest.raises(PreconditionError):
        check_logconcave_bias(DelegationProblem(box, Uniform(box), AffineBias(0.1), kappa=2.0))
