"""Bounded-variable revised simplex for ``max c.x  s.t.  A x <= b,  lb <= x <= ub``.

Singleton rows are folded into variable bounds before solving and their
multipliers are recovered from the reduced costs afterwards, so every row of
the caller's matrix gets a dual value. Pricing is Dantzig's rule with
lowest-index tie breaking; after a run of degenerate pivots the solver switches
to Bland's rule until it makes progress again, which rules out cycling. The
basis is refactorized (sparse LU) every iteration, so identical inputs give
bit-identical outputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

_LOWER, _UPPER, _FREE, _BASIC = 0, 1, 2, 3


@dataclass
class SimplexResult:
    x: np.ndarray
    row_duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    status: str
    iterations: int
    phase1_iterations: int = 0


def _fold_singletons(A: sp.csr_matrix, b, lb, ub):
    """Turn single-entry rows into bounds. Returns kept-row mask and bound sources."""
    m = A.shape[0]
    nnz_per_row = np.diff(A.indptr)
    lb, ub = lb.copy(), ub.copy()
    lb_src = np.full(lb.shape, -1)
    ub_src = np.full(ub.shape, -1)
    keep = np.ones(m, dtype=bool)
    empty_infeasible = False
    for r in np.flatnonzero(nnz_per_row <= 1):
        keep[r] = False
        if nnz_per_row[r] == 0:
            if b[r] < -1e-12:
                empty_infeasible = True
            continue
        j = A.indices[A.indptr[r]]
        a = A.data[A.indptr[r]]
        if a == 0.0:
            if b[r] < -1e-12:
                empty_infeasible = True
            continue
        bound = b[r] / a
        if a > 0:
            if bound <= ub[j]:
                ub[j], ub_src[j] = bound, r
        else:
            if bound >= lb[j]:
                lb[j], lb_src[j] = bound, r
    return keep, lb, ub, lb_src, ub_src, empty_infeasible


class _Solver:
    def __init__(self, M, b, cost, lb, ub, max_iter, pricing, tol):
        self.M = M.tocsc()
        self.MT = self.M.T.tocsr()
        self.b = b
        self.cost = cost
        self.lb = lb
        self.ub = ub
        self.max_iter = max_iter
        self.pricing = pricing
        self.tol = tol
        self.iterations = 0
        self.m, self.N = M.shape

    # basis algebra -------------------------------------------------------
    def _factor(self):
        if self.m == 0:
            return
        B = self.M[:, self.basis].tocsc()
        self.lu = splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})

    def _basic_values(self):
        if self.m == 0:
            return
        xn = self.x.copy()
        xn[self.basis] = 0.0
        rhs = self.b - self.M @ xn
        self.x[self.basis] = self.lu.solve(rhs)

    def _duals(self, cost):
        if self.m == 0:
            return np.zeros(0)
        return self.lu.solve(cost[self.basis], trans="T")

    # main loop -----------------------------------------------------------
    def run(self, cost):
        opt_tol = self.tol * max(1.0, float(np.max(np.abs(cost))))
        degenerate_run = 0
        use_bland = self.pricing == "bland"
        while True:
            if self.iterations >= self.max_iter:
                return ITERATION_LIMIT
            self._factor()
            self._basic_values()
            y = self._duals(cost)
            d = cost - self.MT @ y
            st = self.status
            movable = self.lb < self.ub
            inc = ((st == _LOWER) | (st == _FREE)) & (d < -opt_tol) & movable
            dec = ((st == _UPPER) | (st == _FREE)) & (d > opt_tol) & movable
            eligible = inc | dec
            if not eligible.any():
                self.d = d
                self.y = y
                return OPTIMAL
            if use_bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if inc[q] else -1.0

            col = self.M[:, q].toarray().ravel()
            w = self.lu.solve(col) if self.m else np.zeros(0)
            alpha = direction * w
            xb = self.x[self.basis]
            lbB = self.lb[self.basis]
            ubB = self.ub[self.basis]
            piv_tol = 1e-9 * max(1.0, float(np.max(np.abs(alpha), initial=0.0)))
            ratios = np.full(self.m, np.inf)
            down = (alpha > piv_tol) & np.isfinite(lbB)
            up = (alpha < -piv_tol) & np.isfinite(ubB)
            ratios[down] = (xb[down] - lbB[down]) / alpha[down]
            ratios[up] = (ubB[up] - xb[up]) / (-alpha[up])
            ratios = np.maximum(ratios, 0.0)
            theta = float(ratios.min()) if self.m else np.inf
            span = self.ub[q] - self.lb[q]
            if not np.isfinite(theta) and not np.isfinite(span):
                return UNBOUNDED

            self.iterations += 1
            if span <= theta:
                # bound flip, basis unchanged
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
                self.status[q] = _UPPER if direction > 0 else _LOWER
                degenerate_run = 0
                use_bland = self.pricing == "bland"
                continue

            ties = np.flatnonzero(ratios <= theta + 1e-12 * (1.0 + theta))
            if use_bland:
                r = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            leaving = self.basis[r]
            self.x[q] = self.x[q] + direction * theta
            self.x[self.basis] = xb - theta * alpha
            if alpha[r] > 0:
                self.x[leaving], self.status[leaving] = self.lb[leaving], _LOWER
            else:
                self.x[leaving], self.status[leaving] = self.ub[leaving], _UPPER
            if self.lb[leaving] == -np.inf and self.ub[leaving] == np.inf:
                self.status[leaving] = _FREE
            self.basis[r] = q
            self.status[q] = _BASIC

            if theta <= 1e-12:
                degenerate_run += 1
                if degenerate_run >= 50:
                    use_bland = True
            else:
                degenerate_run = 0
                use_bland = self.pricing == "bland"


def revised_simplex(c, A, b, lb=None, ub=None, *, maximize=True, max_iter=1_000_000,
                    pricing="dantzig", tol=1e-10) -> SimplexResult:
    """Solve ``max (or min) c.x  s.t.  A x <= b,  lb <= x <= ub``.

    ``row_duals`` are the nonnegative multipliers ``y`` of the rows of ``A``
    for the maximization of ``sign * c.x``; ``reduced_costs`` are
    ``sign * c - A^T y`` for the structural variables.
    """
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.eliminate_zeros()
    m, n = A.shape
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).copy()
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).copy()
    sign = 1.0 if maximize else -1.0

    keep, lb, ub, lb_src, ub_src, empty_bad = _fold_singletons(A, b, lb, ub)
    if empty_bad or np.any(lb > ub + 1e-12):
        return SimplexResult(np.full(n, np.nan), np.zeros(m), np.zeros(n), np.nan, INFEASIBLE, 0)
    ub = np.maximum(ub, lb)

    Ak = A[keep]
    bk = b[keep]
    mk = Ak.shape[0]

    x0 = np.zeros(n)
    status0 = np.empty(n, dtype=int)
    for j in range(n):
        lo, hi = lb[j], ub[j]
        if np.isfinite(lo) and (not np.isfinite(hi) or abs(lo) <= abs(hi)):
            x0[j], status0[j] = lo, _LOWER
        elif np.isfinite(hi):
            x0[j], status0[j] = hi, _UPPER
        else:
            x0[j], status0[j] = 0.0, _FREE

    resid = bk - Ak @ x0
    need_art = resid < 0
    art_rows = np.flatnonzero(need_art)
    na = art_rows.size
    I = sp.identity(mk, format="csc")
    Art = sp.csc_matrix((-np.ones(na), (art_rows, np.arange(na))), shape=(mk, na))
    M = sp.hstack([Ak, I, Art], format="csc")
    N = n + mk + na

    full_lb = np.concatenate([lb, np.zeros(mk), np.zeros(na)])
    full_ub = np.concatenate([ub, np.full(mk, np.inf), np.full(na, np.inf)])
    x = np.concatenate([x0, np.zeros(mk + na)])
    status = np.concatenate([status0, np.full(mk + na, _LOWER)])
    basis = []
    for i in range(mk):
        if need_art[i]:
            k = n + mk + int(np.searchsorted(art_rows, i))
        else:
            k = n + i
        basis.append(k)
        status[k] = _BASIC

    solver = _Solver(M, bk, None, full_lb, full_ub, max_iter, pricing, tol)
    solver.x, solver.status, solver.basis = x, status, basis

    phase1_iters = 0
    if na:
        cost1 = np.zeros(N)
        cost1[n + mk:] = 1.0
        st = solver.run(cost1)
        phase1_iters = solver.iterations
        infeas = float(np.sum(solver.x[n + mk:]))
        if st == ITERATION_LIMIT:
            return SimplexResult(solver.x[:n].copy(), np.zeros(m), np.zeros(n), np.nan,
                                 ITERATION_LIMIT, solver.iterations, phase1_iters)
        scale = max(1.0, float(np.max(np.abs(bk))) if mk else 1.0)
        if infeas > 1e-9 * scale:
            return SimplexResult(solver.x[:n].copy(), np.zeros(m), np.zeros(n), np.nan,
                                 INFEASIBLE, solver.iterations, phase1_iters)
        solver.ub[n + mk:] = 0.0
        nb_art = [k for k in range(n + mk, N) if solver.status[k] != _BASIC]
        solver.x[nb_art] = 0.0

    cost2 = np.concatenate([-sign * c, np.zeros(mk + na)])
    st = solver.run(cost2)
    xs = solver.x[:n].copy()
    if st != OPTIMAL:
        return SimplexResult(xs, np.zeros(m), np.zeros(n), float(c @ xs), st,
                             solver.iterations, phase1_iters)

    y_min = solver.y
    d_min = solver.d
    row_duals = np.zeros(m)
    row_duals[np.flatnonzero(keep)] = -y_min
    # folded singleton rows: multiplier = -d_j / a_rj when x_j sits at that bound
    for j in range(n):
        for src, at in ((ub_src[j], _UPPER), (lb_src[j], _LOWER)):
            if src < 0 or solver.status[j] != at:
                continue
            a = A.data[A.indptr[src]]
            row_duals[src] = -d_min[j] / a
    reduced = sign * c - A.T @ row_duals
    return SimplexResult(xs, row_duals, reduced, float(c @ xs), OPTIMAL,
                         solver.iterations, phase1_iters)
