import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from delegation import (Box, DelegationProblem, ProductSet, build_mechanism, constant_menu,
                        discretize_measure, divergence_identity_check, integrate, interval_menu,
                        mc_payoff_difference, mc_principal_payoff, menu_eval,
                        random_feasible_menu)
from delegation.errors import DomainError
from delegation.model import AffineBias, TruncatedNormal
from delegation.sim import (CHUNK, FirstBestUtility, MenuPayoff, chunk_rng, direct_payoff_grid,
                            sample_states)

SIXTH = 1.0 / 6.0


def test_full_delegation_pays_zero(uniform1d):
    est, se = mc_principal_payoff(uniform1d, ProductSet(np.array([-0.5]), np.array([0.5])),
                                  100_000, seed=1)
    assert abs(est) <= 1e-15 and se <= 1e-15


def test_interval_delegation_estimate(uniform1d):
    est, se = mc_principal_payoff(uniform1d, ProductSet(np.array([-SIXTH]), np.array([SIXTH])),
                                  1_000_000, seed=20240601)
    assert abs(est - 1 / 108) <= 3 * se
    assert se < 2e-5


def test_constant_mechanism_is_exactly_zero(uniform1d, uniform2d):
    for prob in (uniform1d, uniform2d):
        mech = build_mechanism(prob, constant_menu(prob))
        assert mc_principal_payoff(prob, mech, 10_000, seed=3) == (0.0, 0.0)


def test_seed_determinism_and_thread_independence(uniform2d):
    mech = build_mechanism(uniform2d, random_feasible_menu(np.random.default_rng(0), uniform2d, 5))
    n = 3 * CHUNK + 17
    one = mc_principal_payoff(uniform2d, mech, n, seed=9, threads=1)
    four = mc_principal_payoff(uniform2d, mech, n, seed=9, threads=4)
    assert one == four
    assert mc_principal_payoff(uniform2d, mech, n, seed=10)[0] != one[0]
    a = sample_states(uniform2d, n, seed=9, threads=1)
    b = sample_states(uniform2d, n, seed=9, threads=3)
    assert a.tobytes() == b.tobytes()


def test_chunk_streams_differ():
    x = chunk_rng(5, 0).random(4)
    y = chunk_rng(5, 1).random(4)
    z = chunk_rng(6, 0).random(4)
    assert not np.array_equal(x, y) and not np.array_equal(x, z)
    assert np.array_equal(x, chunk_rng(5, 0).random(4))


def test_sample_count_validation(uniform1d):
    with pytest.raises(DomainError):
        sample_states(uniform1d, 0, seed=0)


def test_inverse_cdf_sampler_for_truncated_normal():
    box = Box((-2.0,), (2.0,))
    prob = DelegationProblem(box, TruncatedNormal(box, (0.5,), (1.0,)), AffineBias(0.1))
    s = sample_states(prob, 200_000, seed=4)[:, 0]
    assert np.all((s >= -2) & (s <= 2))
    x = np.linspace(-2, 2, 20001)
    f = np.asarray(prob.f(x[:, None]))
    mean = trapezoid(x * f, x) / trapezoid(f, x)
    assert abs(s.mean() - mean) <= 4 * s.std() / math.sqrt(s.size)


def test_identity_first_best(uniform1d):
    chk = divergence_identity_check(uniform1d, FirstBestUtility(uniform1d), 401)
    assert abs(chk.direct) <= 1e-4 and abs(chk.via_measure) <= 1e-4
    assert chk.residual <= 1e-4


def test_identity_interval_menu(uniform1d):
    chk = divergence_identity_check(uniform1d, interval_menu(uniform1d, -SIXTH, SIXTH, 201), 401)
    assert chk.residual <= 1e-4
    assert chk.direct == pytest.approx(1 / 108, abs=1e-4)


def test_identity_constant_menu(uniform1d, uniform2d):
    for prob in (uniform1d, uniform2d):
        chk = divergence_identity_check(prob, constant_menu(prob), 41)
        assert chk.direct == 0.0 and abs(chk.via_measure) <= 1e-15


def test_identity_residual_decreases_under_refinement(uniform1d):
    menu = interval_menu(uniform1d, -SIXTH, SIXTH, 201)
    r = [divergence_identity_check(uniform1d, menu, k).residual for k in (101, 401, 1601)]
    assert r[2] < r[1] < r[0]
    # kink errors are O(dx) with varying sign, so compare across a 16x refinement
    rng = np.random.default_rng(0)
    for _ in range(5):
        menu = random_feasible_menu(rng, uniform1d, 4)
        coarse, fine = (divergence_identity_check(uniform1d, menu, k).residual for k in (101, 1601))
        assert fine < coarse


def test_identity_two_dimensional(uniform2d):
    menu = random_feasible_menu(np.random.default_rng(8), uniform2d, 6)
    coarse = divergence_identity_check(uniform2d, menu, 41).residual
    fine = divergence_identity_check(uniform2d, menu, 161).residual
    assert fine <= 1e-3 and fine < coarse


def test_same_indirect_utility_same_payoff(uniform2d, rng):
    menu = random_feasible_menu(rng, uniform2d, 6)
    s = rng.uniform(-0.5, 0.5, (1000, 2))
    along_x = build_mechanism(uniform2d, menu, direction=(1.0, 0.0))
    along_diag = build_mechanism(uniform2d, menu, direction=(1.0, 1.0))
    plain = MenuPayoff(menu)
    np.testing.assert_allclose(along_x.principal_payoff(uniform2d, s),
                               along_diag.principal_payoff(uniform2d, s), atol=1e-12)
    np.testing.assert_allclose(along_x.principal_payoff(uniform2d, s),
                               plain.principal_payoff(uniform2d, s), atol=1e-12)


def test_mc_agrees_with_measure_integral(uniform1d):
    rng = np.random.default_rng(77)
    mu = discretize_measure(uniform1d, 2001)
    for j in range(8):
        menu = random_feasible_menu(rng, uniform1d, 6, max_burn=0.2)
        mech = build_mechanism(uniform1d, menu)
        est, se = mc_principal_payoff(uniform1d, mech, 200_000, seed=100 + j)
        exact = integrate(mu, menu_eval(menu, mu.nodes)[0])
        assert abs(est - exact) <= 4 * se + 1e-6


def test_paired_difference(uniform1d):
    wide = ProductSet(np.array([-SIXTH]), np.array([SIXTH]))
    narrow = ProductSet(np.array([-1 / 3]), np.array([1 / 3]))
    diff, se = mc_payoff_difference(uniform1d, wide, narrow, 400_000, seed=2)
    assert abs(diff - (1 / 108 - 1 / 216)) <= 3 * se
    _, se_wide = mc_principal_payoff(uniform1d, wide, 400_000, seed=2)
    assert se < se_wide


def test_direct_payoff_matches_closed_form(uniform1d):
    menu = interval_menu(uniform1d, -SIXTH, SIXTH, 2001)
    assert direct_payoff_grid(uniform1d, menu, 2001) == pytest.approx(1 / 108, abs=1e-6)
