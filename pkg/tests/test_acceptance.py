"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (outside pytest's
capture) with the measured quantities and runtime. Run on its own with::

    pytest -v tests/test_acceptance.py
    python tests/test_acceptance.py
"""
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from delegation import (Box, BoundaryCurve, ConvexDelegationSet, DelegationProblem, ProductSet,
                        Uniform, build_gamma_from_partition, build_mechanism, build_primal_lp,
                        check_convex_delegation, check_feasible_grid, check_incentive_compatibility,
                        check_interval_delegation, check_logconcave_bias, check_theorem1,
                        constant_menu, discretize_measure, divergence_identity_check, duality_gap,
                        extract_dual_certificate, interval_menu_on_nodes, interval_value,
                        mc_payoff_difference, mc_principal_payoff, menu_eval,
                        product_set_payoff_uniform, random_feasible_menu, solve_boundary, solve_lp,
                        symmetry_residual, uniform_linear_problem)
from delegation.cli import run as cli_run
from delegation.lp import OPTIMAL
from delegation.model import AffineBias, first_best_payoff
from delegation.sim import FirstBestUtility, IntervalUtility

SIXTH = 1.0 / 6.0


def _report(number, checks, elapsed, limit, emit):
    checks = dict(checks)
    checks[f"runtime {elapsed:.2f}s < {limit}s"] = elapsed < limit
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}"
    detail = "; ".join(failed) if failed else "; ".join(checks)
    emit(f"{line} ({detail})")
    return ok, failed


@pytest.fixture
def emit(capsys):
    def _emit(line):
        with capsys.disabled():
            print(f"\n[acceptance] {line}")
    return _emit


def test_criterion_1_uniform_benchmark(tmp_path, emit):
    """`interval` on the bundled config: s2 = 1/6 and value 1/108."""
    config = Path(__file__).resolve().parents[1] / "configs" / "uniform_alpha05.ini"
    t0 = time.perf_counter()
    code = cli_run(["interval", "--config", str(config), "--out", str(tmp_path)])
    out = json.loads((tmp_path / "interval.json").read_text())
    elapsed = time.perf_counter() - t0
    prob = uniform_linear_problem(1)
    mu = discretize_measure(prob, 241)
    nodes = mu.axes[0]
    grid_sixth = float(np.sum(mu.weights * menu_eval(
        interval_menu_on_nodes(prob, -SIXTH, SIXTH, nodes), mu.nodes)[0]))
    grid_third = float(np.sum(mu.weights * menu_eval(
        interval_menu_on_nodes(prob, -1 / 3, 1 / 3, nodes), mu.nodes)[0]))
    ok, failed = _report(1, {
        f"exit code {code} == 0": code == 0,
        f"verdict {out['verdict']}": out["verdict"] == "pass",
        f"s2 {out['s2']:.6f} within 1e-3 of 1/6": abs(out["s2"] - SIXTH) <= 1e-3,
        f"value {out['value']:.7f} within 1e-4 of 1/108": abs(out["value"] - 1 / 108) <= 1e-4,
        f"grid value at t=1/6 exceeds t=1/3 by {grid_sixth - grid_third:.5f} (about 1/216)":
            grid_sixth > grid_third and abs(grid_sixth - grid_third - 1 / 216) <= 1e-4,
    }, elapsed, 5, emit)
    assert ok, failed


def test_criterion_2_lp_certificate_agreement(emit):
    """241 S-nodes, rho 3: LP objective, duality gap and gamma from the partition agree."""
    t0 = time.perf_counter()
    prob = uniform_linear_problem(1)
    mu = discretize_measure(prob, 241)
    inst = build_primal_lp(prob, mu, 3.0)
    sol = solve_lp(inst)
    gamma_lp = extract_dual_certificate(inst, sol)
    gap = abs(duality_gap(prob, sol, mu, gamma_lp)) / mu.total_variation
    closed = interval_value(prob, -SIXTH, SIXTH)
    menu = interval_menu_on_nodes(prob, -SIXTH, SIXTH, mu.axes[0])
    rep = check_theorem1(prob, menu, mu)
    gamma = build_gamma_from_partition(rep.details["partition"], mu)
    dual_value = float(np.sum(gamma_lp.weights * first_best_payoff(prob, gamma_lp.nodes)))
    gamma_value = float(np.sum(gamma.weights * first_best_payoff(prob, gamma.nodes)))
    elapsed = time.perf_counter() - t0
    ok, failed = _report(2, {
        f"status {sol.status}": sol.status == OPTIMAL,
        f"|LP - int U dmu| = {abs(sol.objective - closed):.2e} <= 1e-4":
            abs(sol.objective - closed) <= 1e-4,
        f"scaled gap {gap:.2e} <= 1e-7": gap <= 1e-7,
        "certificate passes": rep.passed,
        f"|int h dgamma - LP dual| = {abs(gamma_value - dual_value):.2e} <= 1e-6":
            abs(gamma_value - dual_value) <= 1e-6,
    }, elapsed, 30, emit)
    assert ok, failed


def test_criterion_3_lottery_round_trip(emit):
    """100 random feasible menus in one and two dimensions survive the round trip."""
    t0 = time.perf_counter()
    worst_ic = worst_gap = 0.0
    all_passed = True
    for dim in (1, 2):
        prob = uniform_linear_problem(dim)
        if dim == 1:
            grid = np.linspace(-0.5, 0.5, 201)[:, None]
        else:
            g = np.linspace(-0.5, 0.5, 15)
            grid = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        rng = np.random.default_rng(1000 + dim)
        for _ in range(100 if dim == 1 else 20):
            menu = random_feasible_menu(rng, prob, int(rng.integers(1, 16)))
            rep = check_incentive_compatibility(prob, build_mechanism(prob, menu), grid, tol=1e-9)
            worst_ic = max(worst_ic, rep.max_violation)
            worst_gap = max(worst_gap, rep.max_menu_gap)
            all_passed &= rep.passed
    elapsed = time.perf_counter() - t0
    ok, failed = _report(3, {
        f"max IC violation {worst_ic:.1e} <= 1e-9": worst_ic <= 1e-9,
        f"max |U - menu_eval| {worst_gap:.1e} <= 1e-9": worst_gap <= 1e-9,
        "every menu passes": bool(all_passed),
    }, elapsed, 10, emit)
    assert ok, failed


def test_criterion_4_divergence_identity(emit):
    """Direct payoff and int U dmu agree for U = h and the optimal interval."""
    t0 = time.perf_counter()
    prob = uniform_linear_problem(1)
    checks = {}
    for name, U in (("U=h", FirstBestUtility(prob)),
                    ("interval", IntervalUtility(prob, -SIXTH, SIXTH))):
        r401 = divergence_identity_check(prob, U, 401).residual
        r801 = divergence_identity_check(prob, U, 801).residual
        checks[f"{name}: {r401:.2e} <= 1e-4 at 401"] = r401 <= 1e-4
        checks[f"{name}: {r801:.2e} <= half at 801"] = r801 <= 0.5 * r401
    elapsed = time.perf_counter() - t0
    ok, failed = _report(4, checks, elapsed, 5, emit)
    assert ok, failed


def test_criterion_5_logconcave_constant_bias(emit):
    """Uniform on [0, 1], beta = 0.1: interval (0.2, 1), certified, LP agrees."""
    t0 = time.perf_counter()
    box = Box((0.0,), (1.0,))
    prob = DelegationProblem(box, Uniform(box), AffineBias(0.1))
    verdict = check_logconcave_bias(prob)
    s1, s2 = verdict.result.s1, verdict.result.s2
    mu = discretize_measure(prob, 241)
    rep = check_theorem1(prob, interval_menu_on_nodes(prob, s1, s2, mu.axes[0]), mu)
    lp = solve_lp(build_primal_lp(prob, mu, 3.0))
    value = interval_value(prob, s1, s2)
    elapsed = time.perf_counter() - t0
    ok, failed = _report(5, {
        "hypotheses hold": verdict.hypothesis_holds,
        f"interval ({s1:.6f}, {s2:.6f}) within 2e-3 of (0.2, 1)":
            abs(s1 - 0.2) <= 2e-3 and abs(s2 - 1.0) <= 2e-3,
        "general certificate passes": rep.passed,
        f"|LP - value| = {abs(lp.objective - value):.2e} <= 1e-4":
            abs(lp.objective - value) <= 1e-4,
    }, elapsed, 30, emit)
    assert ok, failed


def test_criterion_6_two_dimensional_bundling(emit):
    """The solved delegation set is symmetric, certified and beats every product set."""
    t0 = time.perf_counter()
    prob = uniform_linear_problem(2)
    res = solve_boundary(prob, BoundaryCurve.circle(0.2, 64), max_iters=400, tol=1e-3, threads=4)
    cert = check_convex_delegation(prob, res.curve, tol=5e-3)
    sym = symmetry_residual(res.curve)
    product = product_set_payoff_uniform(prob, SIXTH)
    ours = ConvexDelegationSet(res.curve)
    est, se = mc_principal_payoff(prob, ours, 1_000_000, seed=6, threads=4)
    diff, se_diff = mc_payoff_difference(prob, ours, ProductSet(np.full(2, -SIXTH),
                                                                np.full(2, SIXTH)),
                                         1_000_000, seed=6, threads=4)
    elapsed = time.perf_counter() - t0
    ok, failed = _report(6, {
        f"max equality residual {res.max_residual:.1e} <= 5e-3":
            res.converged and res.max_residual <= 5e-3,
        f"symmetry residual {sym:.1e} <= 1e-3": sym <= 1e-3,
        "convex delegation certificate passes": cert.passed,
        f"MC {est:.6f} - product {product:.6f} > 2 SE ({se:.1e})": est - product > 2 * se,
        f"paired gain {diff:.2e} > 2 SE ({se_diff:.1e})": diff > 2 * se_diff,
    }, elapsed, 300, emit)
    assert ok, failed


def test_criterion_7_falsification(emit):
    """Perturbed intervals, the constant menu and an unextendable line are all rejected."""
    t0 = time.perf_counter()
    prob = uniform_linear_problem(1)
    checks = {}
    for factor in (0.9, 1.1):
        up = check_interval_delegation(prob, -SIXTH, factor * SIXTH)
        down = check_interval_delegation(prob, -factor * SIXTH, SIXTH)
        checks[f"s2 x{factor}: residual {up.upper_equality:.1e} flagged"] = (
            not up.passed and "upper equality violated at s2" in up.failures
            and up.upper_equality != 0.0)
        checks[f"s1 x{factor}: residual {down.lower_equality:.1e} flagged"] = (
            not down.passed and "lower equality violated at s1" in down.failures
            and down.lower_equality != 0.0)
    mu = discretize_measure(prob, 241)
    checks["constant menu fails the general certificate"] = not check_theorem1(
        prob, constant_menu(prob), mu).passed
    unit = Box((0.0,), (1.0,))
    shifted = DelegationProblem(unit, Uniform(unit), prob.bias)
    s = np.linspace(0.0, 1.0, 11)
    checks["U = 2s - 1.6 on [0, 1] rejected on X = [-2, 3]"] = not check_feasible_grid(
        shifted, s, 2 * s - 1.6, 5.0).feasible
    elapsed = time.perf_counter() - t0
    ok, failed = _report(7, checks, elapsed, 10, emit)
    assert ok, failed


if __name__ == "__main__":
    sys.exit(pytest.main(["-q", __file__]))
