"""Numerical tools for optimal delegation with a quadratic-loss agent.

The principal chooses a menu of action lotteries; the agent picks from it.
Optimal menus are found by linear programming over convex indirect utilities,
certified through the signed measure ``mu`` and majorization, and, in two
dimensions, by solving for the boundary of a convex delegation set.
"""
from .boundary2d import (ConvexDelegationSet, ProductSet, RayDisintegration,
                         delegation_set_payoff, product_set_payoff_uniform, solve_boundary)
from .cert import (build_gamma_from_partition, check_convex_delegation,
                   check_interval_delegation, check_logconcave_bias, check_majorization_1d,
                   check_theorem1, extract_partition, find_optimal_interval,
                   interval_indirect_utility, interval_value, lower_tail_residual,
                   upper_tail_residual)
from .config import RunConfig, load_config, parse_config
from .errors import (ConstructionError, DelegationError, DomainError, PreconditionError,
                     SolverError, UnsupportedRegionError, ValidationError)
from .geometry import BoundaryCurve, symmetry_residual
from .lp import (build_primal_lp, duality_gap, extract_dual_certificate, make_x_grid,
                 revised_simplex, solve_lp)
from .measure import (GridSpec, SignedMeasureGrid, discretize_measure, integrate, nu_boundary,
                      nu_interior)
from .mech import (Mechanism, Menu, build_mechanism, check_feasible_grid, check_feasible_menu,
                   check_incentive_compatibility, constant_menu, delegation_set_menu,
                   interval_menu, interval_menu_on_nodes, menu_eval, random_feasible_menu)
from .model import (AffineBias, Box, DelegationProblem, LinearBias, Lottery, NormalMixture,
                    Quadratic, TruncatedNormal, Uniform, first_best_action, first_best_payoff,
                    uniform_linear_problem)
from .sim import divergence_identity_check, mc_payoff_difference, mc_principal_payoff

__version__ = "0.1.0"

__all__ = [
    "AffineBias", "BoundaryCurve", "Box", "ConstructionError", "ConvexDelegationSet",
    "DelegationError", "DelegationProblem", "DomainError", "GridSpec", "LinearBias", "Lottery",
    "Mechanism", "Menu", "NormalMixture", "PreconditionError", "ProductSet", "Quadratic",
    "RayDisintegration", "RunConfig", "SignedMeasureGrid", "SolverError", "TruncatedNormal",
    "Uniform", "UnsupportedRegionError", "ValidationError", "build_gamma_from_partition",
    "build_mechanism", "build_primal_lp", "check_convex_delegation", "check_feasible_grid",
    "check_feasible_menu", "check_incentive_compatibility", "check_interval_delegation",
    "check_logconcave_bias", "check_majorization_1d", "check_theorem1", "constant_menu",
    "delegation_set_menu", "delegation_set_payoff", "discretize_measure",
    "divergence_identity_check", "duality_gap", "extract_dual_certificate",
    "extract_partition", "find_optimal_interval", "first_best_action", "first_best_payoff",
    "integrate", "interval_indirect_utility", "interval_menu", "interval_menu_on_nodes",
    "interval_value", "load_config", "lower_tail_residual", "make_x_grid",
    "mc_payoff_difference", "mc_principal_payoff", "menu_eval", "nu_boundary", "nu_interior",
    "parse_config", "product_set_payoff_uniform", "random_feasible_menu", "revised_simplex",
    "solve_boundary", "solve_lp", "symmetry_residual", "uniform_linear_problem",
    "upper_tail_residual",
]
