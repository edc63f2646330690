"""Discretized primal problem ``max sum_i w_i U_i`` over convex grid functions below h."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from ..errors import ConstructionError, DomainError
from ..measure import SignedMeasureGrid, integrate
from ..model import Box, DelegationProblem, first_best_payoff
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, revised_simplex

DUAL_CLAMP = 1e-10
DUAL_ROUTE_RATIO = 3


def inflate_domain(problem: DelegationProblem, rho: float = 3.0) -> Box:
    """The box S scaled about its center by ``rho``."""
    if not rho >= 1.0:
        raise DomainError(f"inflation factor must be >= 1, got {rho}")
    if rho == 1.0:
        warnings.warn("rho = 1 restricts U <= h to S only; feasibility may be over-permissive",
                      stacklevel=2)
    return problem.state_space.scaled(rho)


@dataclass
class XGrid:
    """Tensor grid on the inflated domain."""

    axes: list

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(a) for a in self.axes)

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, self.n)

    def __len__(self):
        return int(np.prod(self.shape))

    def index_of(self, pts, tol: float = 1e-9) -> np.ndarray:
        """Flat indices of grid nodes coinciding with ``pts``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = []
        for i, ax in enumerate(self.axes):
            k = np.searchsorted(ax, pts[:, i])
            k = np.clip(k, 0, len(ax) - 1)
            km = np.clip(k - 1, 0, len(ax) - 1)
            best = np.where(np.abs(ax[km] - pts[:, i]) < np.abs(ax[k] - pts[:, i]), km, k)
            scale = tol * max(1.0, float(np.max(np.abs(ax))))
            if np.any(np.abs(ax[best] - pts[:, i]) > scale):
                raise ConstructionError("measure node does not lie on the X-grid")
            idx.append(best)
        return np.ravel_multi_index(tuple(idx), self.shape)


def make_x_grid(measure: SignedMeasureGrid, box: Box) -> XGrid:
    """Extend the measure's axes by whole cells until they cover ``box``."""
    if measure.axes is None:
        raise ConstructionError("measure carries no grid axes")
    axes = []
    for ax, lo, hi in zip(measure.axes, box.lo, box.hi):
        d = np.diff(ax)
        step = float(d.mean())
        if np.max(np.abs(d - step)) > 1e-9 * max(1.0, step):
            raise ConstructionError("grid extension needs uniformly spaced axes")
        kl = max(0, math.ceil((ax[0] - lo) / step - 1e-9))
        kr = max(0, math.ceil((hi - ax[-1]) / step - 1e-9))
        left = ax[0] - step * np.arange(kl, 0, -1)
        right = ax[-1] + step * np.arange(1, kr + 1)
        axes.append(np.concatenate([left, ax, right]))
    return XGrid(axes)


@dataclass
class LPInstance:
    """``max c.x  s.t.  A x <= b,  lb <= x <= ub`` with grid metadata.

    Variables ``value_index[i]`` hold U at X-node i; for n >= 2,
    ``grad_index[i]`` hold a subgradient of U at X-node i.
    """

    n_vars: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray
    objective: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    grid: XGrid
    value_index: np.ndarray
    grad_index: Optional[np.ndarray]
    bound_rows: np.ndarray
    convexity_rows: np.ndarray
    h_values: np.ndarray
    node_weights: np.ndarray
    measure_index: np.ndarray = field(repr=False, default=None)

    @property
    def n_rows(self) -> int:
        return int(self.rhs.shape[0])

    @property
    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.n_rows, self.n_vars))

    def objective_of(self, values) -> float:
        """Objective sum_i w_i U_i for grid values U."""
        return math.fsum(self.node_weights * np.asarray(values, dtype=float))


@dataclass
class LPSolution:
    instance: LPInstance
    x: np.ndarray
    duals: np.ndarray
    objective: float
    status: str
    iterations: int = 0

    @property
    def values(self) -> np.ndarray:
        return self.x[self.instance.value_index]

    @property
    def gradients(self) -> np.ndarray:
        inst = self.instance
        if inst.grad_index is not None:
            return self.x[inst.grad_index]
        ax = inst.grid.axes[0]
        U = self.values
        slopes = np.diff(U) / np.diff(ax)
        left = np.concatenate([[slopes[0]], slopes])
        right = np.concatenate([slopes, [slopes[-1]]])
        return (0.5 * (left + right))[:, None]

    @property
    def bound_duals(self) -> np.ndarray:
        return self.duals[self.instance.bound_rows]


def convexity_rows(x_grid: XGrid):
    """Rows ``A U <= 0`` forcing grid values to extend to a convex function.

    Returns ``(rows, cols, vals, n_rows, n_vars, grad_index)``.
    """
    pts = x_grid.points
    N, n = pts.shape
    if n == 1:
        ax = x_grid.axes[0]
        hl = np.diff(ax)[:-1]
        hr = np.diff(ax)[1:]
        norm = 0.5 * (hl + hr)
        r = np.arange(N - 2)
        rows = np.concatenate([r, r, r])
        cols = np.concatenate([r, r + 1, r + 2])
        vals = np.concatenate([-hr / norm, (hl + hr) / norm, -hl / norm])
        return rows, cols, vals, N - 2, N, None
    grad_index = N + np.arange(N * n).reshape(N, n)
    I, J = np.nonzero(~np.eye(N, dtype=bool))
    n_conv = I.size
    r = np.arange(n_conv)
    diff = pts[J] - pts[I]
    rows = np.concatenate([r, r] + [r] * n)
    cols = np.concatenate([I, J] + [grad_index[I, k] for k in range(n)])
    vals = np.concatenate([np.ones(n_conv), -np.ones(n_conv)] + [diff[:, k] for k in range(n)])
    return rows, cols, vals, n_conv, N * (n + 1), grad_index


def build_primal_lp(problem: DelegationProblem, measure: SignedMeasureGrid,
                    x_grid: Union[XGrid, float, None] = None) -> LPInstance:
    """Discretize the primal: convexity rows plus ``U_i <= h(x_i)`` on every X-node.

    ``x_grid`` may be an :class:`XGrid` or an inflation factor (default 3).
    In one dimension convexity is imposed by second differences; in higher
    dimensions by subgradient variables and one row per ordered node pair.
    """
    if x_grid is None or np.isscalar(x_grid):
        rho = 3.0 if x_grid is None else float(x_grid)
        x_grid = make_x_grid(measure, inflate_domain(problem, rho))
    pts = x_grid.points
    N, n = pts.shape
    midx = x_grid.index_of(measure.nodes)
    weights = np.zeros(N)
    order = np.argsort(midx, kind="stable")
    uniq, starts = np.unique(midx[order], return_index=True)
    for k, chunk in zip(uniq, np.split(measure.weights[order], starts[1:])):
        weights[k] = math.fsum(chunk)
    h = np.asarray(first_best_payoff(problem, pts), dtype=float)

    rows, cols, vals, n_conv, n_vars, grad_index = convexity_rows(x_grid)
    bound_rows = n_conv + np.arange(N)
    rows = np.concatenate([rows, bound_rows])
    cols = np.concatenate([cols, np.arange(N)])
    vals = np.concatenate([vals, np.ones(N)])
    rhs = np.concatenate([np.zeros(n_conv), h])
    objective = np.zeros(n_vars)
    objective[:N] = weights
    return LPInstance(
        n_vars=n_vars, rows=rows.astype(np.int64), cols=cols.astype(np.int64),
        vals=vals.astype(float), rhs=rhs, objective=objective,
        lb=np.full(n_vars, -np.inf), ub=np.full(n_vars, np.inf), grid=x_grid,
        value_index=np.arange(N), grad_index=grad_index, bound_rows=bound_rows,
        convexity_rows=np.arange(n_conv), h_values=h, node_weights=weights,
        measure_index=midx)


def build_feasibility_lp(problem: DelegationProblem, x_grid: XGrid, fixed_index,
                         fixed_values) -> LPInstance:
    """Zero-objective instance: U fixed at ``fixed_index`` nodes, free elsewhere."""
    pts = x_grid.points
    N = pts.shape[0]
    h = np.asarray(first_best_payoff(problem, pts), dtype=float)
    rows, cols, vals, n_conv, n_vars, grad_index = convexity_rows(x_grid)
    bound_rows = n_conv + np.arange(N)
    lb = np.full(n_vars, -np.inf)
    ub = np.full(n_vars, np.inf)
    lb[np.asarray(fixed_index)] = fixed_values
    ub[np.asarray(fixed_index)] = fixed_values
    return LPInstance(
        n_vars=n_vars, rows=np.concatenate([rows, bound_rows]).astype(np.int64),
        cols=np.concatenate([cols, np.arange(N)]).astype(np.int64),
        vals=np.concatenate([vals, np.ones(N)]), rhs=np.concatenate([np.zeros(n_conv), h]),
        objective=np.zeros(n_vars), lb=lb, ub=ub, grid=x_grid, value_index=np.arange(N),
        grad_index=grad_index, bound_rows=bound_rows, convexity_rows=np.arange(n_conv),
        h_values=h, node_weights=np.zeros(N))


def solve_lp(instance: LPInstance, method: str = "simplex", max_iter: int = 1_000_000,
             pricing: str = "dantzig") -> LPSolution:
    """Solve the instance. ``method='highs'`` delegates to scipy for cross-checks.

    With free variables and many more rows than columns (the pairwise
    instances in n >= 2) the simplex runs on the dual ``min b.y, A^T y = c,
    y >= 0``, whose basis has only ``2 * n_vars`` rows.
    """
    if method == "simplex":
        free = np.all(np.isinf(instance.lb)) and np.all(np.isinf(instance.ub))
        if free and instance.n_rows > DUAL_ROUTE_RATIO * instance.n_vars:
            return _solve_via_dual(instance, max_iter, pricing)
        res = revised_simplex(instance.objective, instance.matrix, instance.rhs,
                              instance.lb, instance.ub, maximize=True, max_iter=max_iter,
                              pricing=pricing)
        return LPSolution(instance, res.x, res.row_duals, res.objective, res.status,
                          res.iterations)
    if method == "highs":
        from scipy.optimize import linprog

        res = linprog(-instance.objective, A_ub=instance.matrix, b_ub=instance.rhs,
                      bounds=list(zip(instance.lb, instance.ub)), method="highs")
        status = {0: OPTIMAL, 1: "iteration-limit", 2: "infeasible", 3: "unbounded"}.get(
            res.status, "error")
        if status != OPTIMAL:
            nanx = np.full(instance.n_vars, np.nan)
            return LPSolution(instance, nanx, np.zeros(instance.n_rows), np.nan, status)
        return LPSolution(instance, res.x, -res.ineqlin.marginals, -res.fun, status,
                          int(res.nit))
    raise DomainError(f"unknown LP method {method!r}")


def _solve_via_dual(instance: LPInstance, max_iter: int, pricing: str) -> LPSolution:
    A = instance.matrix
    n = instance.n_vars
    At = A.T.tocsr()
    res = revised_simplex(instance.rhs, sp.vstack([At, -At]).tocsr(),
                          np.concatenate([instance.objective, -instance.objective]),
                          np.zeros(instance.n_rows), None, maximize=False, max_iter=max_iter,
                          pricing=pricing)
    # an unbounded dual means an infeasible primal and vice versa
    status = {UNBOUNDED: INFEASIBLE, INFEASIBLE: UNBOUNDED}.get(res.status, res.status)
    if status != OPTIMAL:
        nanx = np.full(n, np.nan)
        return LPSolution(instance, nanx, np.zeros(instance.n_rows), np.nan, status,
                          res.iterations)
    x = res.row_duals[n:] - res.row_duals[:n]
    return LPSolution(instance, x, res.x, float(res.objective), status, res.iterations)


def extract_dual_certificate(instance: LPInstance, solution: LPSolution) -> SignedMeasureGrid:
    """The positive measure gamma: multipliers of the ``U <= h`` rows as atoms."""
    if solution.status != OPTIMAL:
        raise DomainError(f"dual certificate needs an optimal solution, status={solution.status}")
    w = np.array(solution.duals[instance.bound_rows], dtype=float)
    if np.any(w < -1e-8 * max(1.0, float(np.max(np.abs(w), initial=0.0)))):
        raise DomainError("bound multipliers are negative; solution is not dual feasible")
    w[w < DUAL_CLAMP] = 0.0
    return SignedMeasureGrid(instance.grid.points, w, False, 0.0, axes=instance.grid.axes)


def _values_on(measure: SignedMeasureGrid, U) -> np.ndarray:
    if isinstance(U, LPSolution):
        idx = U.instance.grid.index_of(measure.nodes)
        return U.values[idx]
    return np.asarray(U(measure.nodes), dtype=float).ravel()


def duality_gap(problem: DelegationProblem, U: Union[LPSolution, Callable],
                measure: SignedMeasureGrid, gamma: SignedMeasureGrid) -> float:
    """``int h dgamma - int U dmu``; nonnegative for feasible pairs, zero at optimality."""
    if np.any(gamma.weights < -DUAL_CLAMP):
        raise DomainError("gamma must be a positive measure")
    hg = integrate(gamma, first_best_payoff(problem, gamma.nodes))
    return hg - integrate(measure, _values_on(measure, U))


def complementary_slackness(problem: DelegationProblem, solution: LPSolution,
                            measure: SignedMeasureGrid, gamma: SignedMeasureGrid):
    """Residuals of the two complementary slackness conditions.

    Returns ``(sum_i gamma_i (h_i - U_i), |int U dmu - int U dgamma|)``.
    """
    hU = first_best_payoff(problem, gamma.nodes) - _values_on(gamma, solution)
    cs1 = integrate(gamma, hU)
    cs2 = abs(integrate(measure, _values_on(measure, solution))
              - integrate(gamma, _values_on(gamma, solution)))
    return cs1, cs2


def export_lp(instance: LPInstance) -> str:
    """Text in CPLEX LP format with 17 significant digits."""
    fmt = lambda v: format(float(v), ".17g")

    def term(coef, name, first):
        if first:
            return f"{'-' if coef < 0 else ''}{fmt(abs(coef))} {name}"
        return f"{'-' if coef < 0 else '+'} {fmt(abs(coef))} {name}"

    names = [f"x{j}" for j in range(instance.n_vars)]
    out = ["\\ delegation primal", "Maximize"]
    obj = [term(c, names[j], k == 0)
           for k, (j, c) in enumerate((j, c) for j, c in enumerate(instance.objective) if c != 0)]
    out.append(" obj: " + (" ".join(obj) if obj else "0 x0"))
    out.append("Subject To")
    A = instance.matrix.tocsr()
    for r in range(instance.n_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        parts = [term(A.data[k], names[A.indices[k]], k == lo) for k in range(lo, hi)]
        out.append(f" r{r}: {' '.join(parts)} <= {fmt(instance.rhs[r])}")
    out.append("Bounds")
    for j in range(instance.n_vars):
        lo, hi = instance.lb[j], instance.ub[j]
        if np.isinf(lo) and np.isinf(hi):
            out.append(f" {names[j]} free")
        else:
            los = "-inf" if np.isinf(lo) else fmt(lo)
            his = "+inf" if np.isinf(hi) else fmt(hi)
            out.append(f" {los} <= {names[j]} <= {his}")
    out.append("End")
    return "\n".join(out) + "\n"


def convex_order_battery(gamma: SignedMeasureGrid, mu: SignedMeasureGrid,
                         rng: np.random.Generator, count: int = 200, tol: float = 1e-8):
    """Randomized test of ``mu <=_cx gamma``.

    Checks mass and barycenter equality (all affine test functions) and
    ``int phi dgamma >= int phi dmu - tol`` for ``count`` random hinges
    ``phi = max(0, a.s + c)`` whose kinks cross the joint support.
    Returns ``(passed, worst_shortfall)``.
    """
    scale = max(1.0, gamma.total_variation, mu.total_variation)
    worst = abs(gamma.total_mass - mu.total_mass)
    worst = max(worst, float(np.max(np.abs(gamma.first_moment() - mu.first_moment()))))
    pts = np.vstack([gamma.nodes, mu.nodes])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    n = pts.shape[1]
    for _ in range(count):
        a = rng.normal(size=n)
        a /= np.linalg.norm(a)
        anchor = lo + rng.random(n) * (hi - lo)
        c = -float(a @ anchor)
        phi = lambda x: np.maximum(0.0, x @ a + c)
        shortfall = integrate(mu, phi(mu.nodes)) - integrate(gamma, phi(gamma.nodes))
        worst = max(worst, shortfall)
    return worst <= tol * scale, worst
