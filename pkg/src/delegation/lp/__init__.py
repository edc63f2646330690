"""Discretized primal/dual linear programs and the simplex solver behind them."""
from .problem import (
    LPInstance,
    LPSolution,
    XGrid,
    build_feasibility_lp,
    build_primal_lp,
    convexity_rows,
    complementary_slackness,
    convex_order_battery,
    duality_gap,
    export_lp,
    extract_dual_certificate,
    inflate_domain,
    make_x_grid,
    solve_lp,
)
from .simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, revised_simplex

__all__ = [
    "LPInstance", "LPSolution", "XGrid", "build_feasibility_lp", "build_primal_lp",
    "complementary_slackness", "convex_order_battery", "convexity_rows", "duality_gap",
    "export_lp", "extract_dual_certificate", "inflate_domain", "make_x_grid", "solve_lp",
    "revised_simplex", "OPTIMAL", "INFEASIBLE", "ITERATION_LIMIT", "UNBOUNDED",
]
