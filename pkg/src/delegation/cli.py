"""Command-line entry point.

Usage: ``delegation <command> --config run.ini [--out DIR] [flags]``.

Commands write their artifacts (CSV and JSON, floats with 17 significant
digits) into ``--out`` and print a one-line summary. Exit codes: 0 success,
1 invalid input, 2 solver failure, 3 candidate fails its certificate.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import textio
from .boundary2d import (ConvexDelegationSet, delegation_set_payoff, product_set_payoff_uniform,
                         solve_boundary)
from .cert import (check_convex_delegation, check_interval_delegation, check_theorem1,
                   find_optimal_interval, interval_value, upper_tail_residual)
from .config import RunConfig, load_config
from .errors import (ConstructionError, DomainError, PreconditionError, SolverError,
                     UnsupportedRegionError, ValidationError)
from .geometry import BoundaryCurve
from .lp import build_primal_lp, duality_gap, extract_dual_certificate, solve_lp
from .lp.simplex import OPTIMAL
from .measure import discretize_measure, integrate
from .mech import (Menu, build_mechanism, check_feasible_menu, check_incentive_compatibility,
                   delegation_set_menu,
                   interval_menu, interval_menu_on_nodes, menu_eval)
from .model import first_best_payoff, uniform_linear_problem
from .sim import mc_principal_payoff

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_CERT = 0, 1, 2, 3
COMMANDS = ("nu", "solve", "interval", "certify", "boundary2d", "simulate", "figures",
            "mechanism")
MAX_PAIRWISE_NODES = {"simplex": 64, "highs": 400}
FIGURE_POINTS = 201


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors are validation errors, not solver failures (argparse's default 2)
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="delegation", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, help="override [sim] seed")
    p.add_argument("--threads", type=int, help="override [sim] threads")
    p.add_argument("--tol", type=float, help="override [cert] tol")
    p.add_argument("--alpha", type=float, help="override the linear bias coefficient")
    p.add_argument("--s1", type=float, help="lower end of a candidate interval")
    p.add_argument("--s2", type=float, help="upper end of a candidate interval")
    p.add_argument("--menu", help="menu JSON file (pieces with action and intercept)")
    p.add_argument("--boundary", help="vertex CSV of a convex delegation set (columns x, y)")
    return p


# --------------------------------------------------------------------------
# input helpers


def _interval_args(args, problem):
    if (args.s1 is None) != (args.s2 is None):
        raise ValidationError("--s1 and --s2 must be given together")
    if args.s1 is None:
        return None
    if problem.n != 1:
        raise ValidationError("--s1/--s2 need a one-dimensional problem")
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    if not lo <= args.s1 < args.s2 <= hi:
        raise ValidationError(f"need {lo} <= s1 < s2 <= {hi}")
    return args.s1, args.s2


def _load_menu(path, problem) -> Menu:
    try:
        menu = Menu.from_dict(textio.read_json(path))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ValidationError(f"cannot read menu {path}: {exc}") from exc
    if menu.n != problem.n:
        raise ValidationError("menu dimension does not match the problem")
    return menu


def _load_boundary(path, problem) -> BoundaryCurve:
    if problem.n != 2:
        raise ValidationError("--boundary needs a two-dimensional problem")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        V = np.array([[float(r["x"]), float(r["y"])] for r in rows])
        return BoundaryCurve(V)
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"cannot read boundary {path}: {exc}") from exc


def _validate_inputs(args, cfg: RunConfig, problem):
    """Check every command-specific input before computing anything."""
    interval = _interval_args(args, problem)
    menu = _load_menu(args.menu, problem) if args.menu else None
    curve = _load_boundary(args.boundary, problem) if args.boundary else None
    given = sum(x is not None for x in (interval, menu, curve))
    if given > 1:
        raise ValidationError("give at most one of --s1/--s2, --menu, --boundary")
    cmd = args.command
    if cmd in ("interval", "figures") and problem.n != 1:
        raise ValidationError(f"{cmd} needs a one-dimensional problem")
    if cmd == "boundary2d" and problem.n != 2:
        raise ValidationError("boundary2d needs a two-dimensional problem")
    if cmd == "certify" and given == 0:
        raise ValidationError("certify needs --s1/--s2, --menu or --boundary")
    if cmd in ("simulate", "mechanism") and given == 0 and problem.n != 1:
        raise ValidationError(f"{cmd} needs --menu or --boundary in two dimensions")
    if cmd == "mechanism" and curve is not None:
        raise ValidationError("mechanism serializes menus; use --menu or --s1/--s2")
    if cmd == "solve" and problem.n > 1:
        x_nodes = (int(math.ceil(cfg.rho * (cfg.nodes - 1))) + 1) ** problem.n
        cap = MAX_PAIRWISE_NODES[cfg.lp_method]
        if x_nodes > cap:
            raise ValidationError(f"multidimensional LP with {cfg.lp_method} is limited to "
                                  f"{cap} X-nodes; lower [grid] nodes or rho")
    return interval, menu, curve


def _optimal_interval_menu(cfg, problem, nodes=None):
    res = find_optimal_interval(problem, points=cfg.points, tol=cfg.tol)
    if res.pooled or res.report is None or not res.report.passed:
        raise SolverError(f"no certified interval: {res.diagnostic}")
    if nodes is None:
        return res, interval_menu(problem, res.s1, res.s2)
    return res, interval_menu_on_nodes(problem, res.s1, res.s2, nodes)


# --------------------------------------------------------------------------
# commands


def cmd_nu(args, cfg, problem, out, inputs):
    mu = discretize_measure(problem, cfg.nodes)
    header, rows = mu.table()
    textio.write_csv(out / "nu.csv", header, rows)
    print(f"nu: {len(mu)} entries, total mass {mu.total_mass:.17g}")
    return EXIT_OK


def cmd_solve(args, cfg, problem, out, inputs):
    mu = discretize_measure(problem, cfg.nodes)
    inst = build_primal_lp(problem, mu, cfg.rho)
    sol = solve_lp(inst, method=cfg.lp_method, max_iter=cfg.lp_max_iter, pricing=cfg.pricing)
    summary = {"status": sol.status, "iterations": sol.iterations, "nodes": cfg.nodes,
               "rho": cfg.rho, "x_nodes": int(inst.grid.points.shape[0])}
    if sol.status != OPTIMAL:
        textio.write_json(out / "solve.json", summary)
        print(f"solve: LP status {sol.status}")
        return EXIT_SOLVER
    gamma = extract_dual_certificate(inst, sol)
    gap = duality_gap(problem, sol, mu, gamma)
    nodes, _ = mu.aggregate()
    idx = inst.grid.index_of(nodes)
    grads = sol.gradients[idx]
    U = sol.values[idx]
    header = [f"s{i + 1}" for i in range(problem.n)] + ["U"] + \
        [f"dU{i + 1}" for i in range(problem.n)]
    textio.write_csv(out / "solution.csv", header,
                     [[*p.tolist(), float(u), *g.tolist()] for p, u, g in zip(nodes, U, grads)])
    summary.update(objective=sol.objective,
                   dual_objective=integrate(gamma, first_best_payoff(problem, gamma.nodes)),
                   gap=gap, scaled_gap=gap / mu.total_variation)
    if problem.n == 1:
        try:
            res, menu = _optimal_interval_menu(cfg, problem, mu.axes[0])
            summary["interval"] = {"s1": res.s1, "s2": res.s2,
                                   "objective": integrate(mu, menu_eval(menu, mu.nodes)[0])}
        except (SolverError, PreconditionError) as exc:
            summary["interval"] = {"unavailable": str(exc)}
    textio.write_json(out / "solve.json", summary)
    print(f"solve: objective {sol.objective:.17g}, gap {gap:.3e}")
    return EXIT_OK


def cmd_interval(args, cfg, problem, out, inputs):
    res = find_optimal_interval(problem, points=cfg.points, tol=cfg.tol)
    data = res.to_dict()
    passed = res.report is not None and res.report.passed
    data["verdict"] = "pooled" if res.pooled else ("pass" if passed else "fail")
    if not res.pooled:
        data["value"] = interval_value(problem, res.s1, res.s2)
    textio.write_json(out / "interval.json", data)
    print(f"interval: [{res.s1:.17g}, {res.s2:.17g}] {data['verdict']}")
    return EXIT_OK if passed or res.pooled else EXIT_SOLVER


def _interval_condition_table(rep):
    thr = rep.tol * rep.scale
    rows = [("i", "nu_nonnegative_on_interval", -rep.min_nu),
            ("ii", "upper_tail_nonpositive", rep.max_upper_tail),
            ("ii", "upper_equality_at_s2", abs(rep.upper_equality)),
            ("iii", "lower_tail_nonpositive", rep.max_lower_tail),
            ("iii", "lower_equality_at_s1", abs(rep.lower_equality))]
    return [[c, name, float(v), float(thr), "pass" if v <= thr else "fail"]
            for c, name, v in rows]


def cmd_certify(args, cfg, problem, out, inputs):
    interval, menu, curve = inputs
    if curve is not None:
        rep = check_convex_delegation(problem, curve, tol=cfg.tol_2d)
        textio.write_json(out / "certify.json", rep)
        textio.write_csv(out / "certify_residuals.csv", ["vertex", "x", "y", "residual"],
                         [[k, *v.tolist(), float(r)] for k, (v, r)
                          in enumerate(zip(curve.vertices, rep.residuals))])
        passed, worst = rep.passed, rep.max_equality_residual
    elif interval is not None:
        rep = check_interval_delegation(problem, *interval, tol=cfg.tol)
        mu = discretize_measure(problem, cfg.nodes)
        grid_menu = interval_menu_on_nodes(problem, *interval, mu.axes[0])
        grid_rep = check_theorem1(problem, grid_menu, mu, tol=cfg.tol)
        grid_rep.details.pop("partition", None)
        textio.write_json(out / "certify.json", {"interval": rep, "grid": grid_rep})
        textio.write_csv(out / "certify_residuals.csv",
                         ["condition", "check", "residual", "threshold", "verdict"],
                         _interval_condition_table(rep))
        passed, worst = rep.passed and grid_rep.passed, rep.worst_residual
    else:
        if not check_feasible_menu(problem, menu):
            raise ValidationError("menu is not feasible (some intercept exceeds b(action))")
        mu = discretize_measure(problem, cfg.nodes)
        try:
            rep = check_theorem1(problem, menu, mu, tol=cfg.tol)
        except UnsupportedRegionError as exc:
            print(f"certify: {exc}")
            return EXIT_CERT
        rep.details.pop("partition", None)
        textio.write_json(out / "certify.json", rep)
        textio.write_csv(out / "certify_residuals.csv",
                         ["piece", "kind", "entries", "mass", "worst_residual", "verdict",
                          "reason"],
                         [[r.piece, r.kind, r.entries, float(r.mass), float(r.worst_residual),
                           "pass" if r.passed else "fail", r.reason] for r in rep.regions])
        passed, worst = rep.passed, rep.worst_residual
    print(f"certify: {'pass' if passed else 'fail'}, worst residual {worst:.3e}")
    return EXIT_OK if passed else EXIT_CERT


def _product_set_comparison(cfg, problem, curve):
    """Best product set [-t, t]^2 with t from the one-dimensional problem, if available."""
    p = cfg.problem
    if not (p.density == "uniform" and p.bias == "linear" and len(set(p.lo)) == 1
            and len(set(p.hi)) == 1 and p.lo[0] == -p.hi[0]):
        return None
    one = uniform_linear_problem(1, p.alpha, p.kappa, p.hi[0])
    res = find_optimal_interval(one, points=cfg.points, tol=cfg.tol)
    t = res.s2
    return {"t": t, "product_payoff": product_set_payoff_uniform(problem, t),
            "delegation_payoff": delegation_set_payoff(problem, curve)}


def cmd_boundary2d(args, cfg, problem, out, inputs):
    _, _, start = inputs
    if start is None:
        start = BoundaryCurve.circle(cfg.initial_radius, cfg.vertices, problem.state_space.center)
    res = solve_boundary(problem, start, max_iters=cfg.max_iters, tol=cfg.boundary_tol,
                         threads=cfg.threads)
    curve = res.curve
    header, rows = curve.table()
    textio.write_csv(out / "boundary.csv", header + ["residual"],
                     [r + [float(x)] for r, x in zip(rows, res.residuals)])
    report = {"solver": res.to_dict()}
    if res.converged:
        report["certificate"] = check_convex_delegation(problem, curve, tol=cfg.tol_2d)
        cmp = _product_set_comparison(cfg, problem, curve)
        if cmp is not None:
            report["comparison"] = cmp
    textio.write_json(out / "boundary2d.json", report)
    print(f"boundary2d: {res.status} after {res.iterations} sweeps, "
          f"max residual {res.max_residual:.3e}")
    return EXIT_OK if res.converged else EXIT_SOLVER


def _mechanism_from(cfg, problem, inputs):
    interval, menu, curve = inputs
    if curve is not None:
        return ConvexDelegationSet(curve), {"kind": "convex_set", "vertices": len(curve)}
    if interval is not None:
        menu = interval_menu(problem, *interval)
        desc = {"kind": "interval", "s1": interval[0], "s2": interval[1]}
    elif menu is not None:
        desc = {"kind": "menu", "pieces": len(menu)}
    else:
        res, menu = _optimal_interval_menu(cfg, problem)
        desc = {"kind": "optimal_interval", "s1": res.s1, "s2": res.s2}
    try:
        return build_mechanism(problem, menu), desc
    except DomainError as exc:
        raise ValidationError(str(exc)) from exc


def cmd_simulate(args, cfg, problem, out, inputs):
    mech, desc = _mechanism_from(cfg, problem, inputs)
    est, se = mc_principal_payoff(problem, mech, cfg.samples, cfg.seed, cfg.threads)
    textio.write_json(out / "simulate.json", {"mechanism": desc, "samples": cfg.samples,
                                              "seed": cfg.seed, "estimate": est,
                                              "standard_error": se})
    print(f"simulate: {est:.17g} +- {se:.3e}")
    return EXIT_OK


def cmd_mechanism(args, cfg, problem, out, inputs):
    mech, desc = _mechanism_from(cfg, problem, inputs)
    box = problem.state_space
    axes = [np.linspace(lo, hi, 201 if problem.n == 1 else 41) for lo, hi in zip(box.lo, box.hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, problem.n)
    ic = check_incentive_compatibility(problem, mech, grid)
    textio.write_json(out / "mechanism.json", {"description": desc, "mechanism": mech,
                                               "incentive_check": ic})
    print(f"mechanism: {len(mech.menu)} pieces, IC violation {ic.max_violation:.3e}")
    return EXIT_OK


def _figure_menus(problem):
    """Indirect utilities of four feasible mechanism shapes on the 1D example."""
    half = 0.5 * float(problem.state_space.widths[0])
    b = lambda a: float(np.ravel(problem.b(np.array([a])))[0])
    outer, inner = 0.6 * half, 0.1 * half
    return {
        "interval": interval_menu(problem, -half / 3, half / 3),
        "deterministic": delegation_set_menu(problem, [-outer, 0.0, outer]),
        "stochastic": Menu.from_pieces([(-0.5 * half, b(-0.5 * half)), (0.0, -0.08 * half**2),
                                        (0.5 * half, b(0.5 * half))]),
        "two_stochastic": Menu.from_pieces([(-outer, b(-outer)),
                                            (-inner, b(-inner) - 0.04 * half**2),
                                            (inner, b(inner) - 0.04 * half**2),
                                            (outer, b(outer))]),
    }


def cmd_figures(args, cfg, problem, out, inputs):
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    s = np.linspace(lo, hi, FIGURE_POINTS)
    h = first_best_payoff(problem, s)

    # a line below h on S with no convex extension below h beyond S
    width = hi - lo
    slope = 2.0 * width
    line = lambda x: slope * x - 0.8 * slope**2 / 2
    ext = np.linspace(lo, lo + 4 * width, 4 * (FIGURE_POINTS - 1) + 1)
    textio.write_csv(out / "infeasible_extension.csv", ["s", "h", "U", "in_state_space"],
                     [[float(x), float(y), float(line(x)), int(x <= hi)]
                      for x, y in zip(ext, first_best_payoff(problem, ext))])

    menus = _figure_menus(problem)
    cols = {k: menu_eval(m, s)[0] for k, m in menus.items()}
    textio.write_csv(out / "indirect_utilities.csv", ["s", "h", *cols],
                     [[float(s[i]), float(h[i]), *(float(c[i]) for c in cols.values())]
                      for i in range(s.size)])

    res, menu = _optimal_interval_menu(cfg, problem)
    pivot = res.s2 + 0.5 * (hi - res.s2)
    eps = 0.1
    U = menu_eval(menu, s)[0]
    tilted = U + eps * np.maximum(s - pivot, 0.0)
    tail = upper_tail_residual(problem, s)
    textio.write_csv(out / "tilt.csv", ["s", "h", "U", "U_tilted", "upper_tail_moment"],
                     [[float(s[i]), float(h[i]), float(U[i]), float(tilted[i]), float(tail[i])]
                      for i in range(s.size)])
    textio.write_json(out / "figures.json", {
        "s1": res.s1, "s2": res.s2, "tilt_pivot": pivot, "tilt_slope": eps,
        "tilt_payoff_change": eps * float(upper_tail_residual(problem, pivot)),
        "menus": menus})
    print("figures: wrote infeasible_extension.csv, indirect_utilities.csv, tilt.csv")
    return EXIT_OK


HANDLERS = {"nu": cmd_nu, "solve": cmd_solve, "interval": cmd_interval, "certify": cmd_certify,
            "boundary2d": cmd_boundary2d, "simulate": cmd_simulate, "figures": cmd_figures,
            "mechanism": cmd_mechanism}


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.alpha, args.tol, args.seed,
                                                      args.threads)
        problem = cfg.build_problem()
        inputs = _validate_inputs(args, cfg, problem)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ValidationError, ConstructionError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return HANDLERS[args.command](args, cfg, problem, out, inputs)
    except (ValidationError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
