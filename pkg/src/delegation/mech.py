"""Menus of affine pieces, their feasibility, and the lotteries that implement them.

A menu is a finite list of pieces ``(a_k, c_k)``; the indirect utility it
induces is ``U(s) = max_k a_k.s + c_k``. A piece can be offered as a lottery
with mean ``a_k`` exactly when ``c_k <= b(a_k)``; the gap ``b(a_k) - c_k`` is
the payoff burnt by randomizing around the mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import ConstructionError, DomainError, SolverError
from .lp.problem import XGrid, build_feasibility_lp, inflate_domain, solve_lp
from .lp.simplex import INFEASIBLE, OPTIMAL
from .model import DelegationProblem, Lottery, Quadratic, as_points

FEASIBILITY_TOL = 1e-12
ZERO_BURN = 1e-15


@dataclass(frozen=True)
class Menu:
    """Pieces ``(a_k, c_k)`` with ``actions`` of shape (K, n) and ``intercepts`` (K,)."""

    actions: np.ndarray
    intercepts: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.actions, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        c = np.atleast_1d(np.asarray(self.intercepts, dtype=float)).ravel()
        if a.ndim != 2 or a.shape[0] == 0 or a.shape[0] != c.shape[0]:
            raise ConstructionError("menu needs at least one piece and one intercept per action")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(c))):
            raise ConstructionError("menu pieces must be finite")
        keys = np.column_stack([a, c])
        if np.unique(keys, axis=0).shape[0] != keys.shape[0]:
            raise ConstructionError("menu contains identical pieces")
        a.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "intercepts", c)

    @classmethod
    def from_pieces(cls, pieces: Sequence) -> "Menu":
        acts = [np.atleast_1d(np.asarray(a, dtype=float)) for a, _ in pieces]
        return cls(np.stack(acts), np.array([c for _, c in pieces], dtype=float))

    @property
    def n(self) -> int:
        return self.actions.shape[1]

    def __len__(self):
        return self.actions.shape[0]

    def pieces(self):
        return [(a.copy(), float(c)) for a, c in zip(self.actions, self.intercepts)]

    def with_piece(self, a, c) -> "Menu":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return Menu(np.vstack([self.actions, a]), np.append(self.intercepts, c))

    def burns(self, problem: DelegationProblem) -> np.ndarray:
        return problem.b(self.actions) - self.intercepts

    def to_dict(self) -> dict:
        return {"pieces": [{"action": a.tolist(), "intercept": float(c)}
                           for a, c in zip(self.actions, self.intercepts)]}

    @classmethod
    def from_dict(cls, d: dict) -> "Menu":
        return cls.from_pieces([(p["action"], p["intercept"]) for p in d["pieces"]])


def menu_eval(menu: Menu, s):
    """``(max_k a_k.s + c_k, argmax)`` with ties going to the lowest index.

    Scalars come back for a single point, arrays for a batch.
    """
    pts = as_points(s, menu.n)
    vals = pts @ menu.actions.T + menu.intercepts
    idx = np.argmax(vals, axis=-1)
    best = np.take_along_axis(vals, idx[..., None], axis=-1)[..., 0]
    if best.ndim == 0:
        return float(best), int(idx)
    return best, idx


# --------------------------------------------------------------------------
# feasibility


@dataclass
class FeasibilityVerdict:
    feasible: bool
    burns: Optional[np.ndarray] = None
    violating: Optional[np.ndarray] = None
    status: str = ""
    extension: Optional[np.ndarray] = None

    def __bool__(self):
        return bool(self.feasible)


def check_feasible_menu(problem: DelegationProblem, menu: Menu) -> FeasibilityVerdict:
    """Feasible iff every piece satisfies ``c_k <= b(a_k)`` (up to 1e-12).

    An affine function ``a.s + c`` stays below h everywhere exactly when
    ``c <= -h*(a) = b(a)``, and a maximum of affine functions is convex, so the
    check is piecewise.
    """
    if menu.n != problem.n:
        raise DomainError("menu dimension does not match the problem")
    burns = menu.burns(problem)
    bad = np.flatnonzero(burns < -FEASIBILITY_TOL)
    return FeasibilityVerdict(bad.size == 0, burns, bad)


def check_feasible_grid(problem: DelegationProblem, s_nodes, values, x_grid=3.0,
                        method: str = "simplex") -> FeasibilityVerdict:
    """Does a grid function on S extend to a convex function below h on X?

    ``s_nodes`` are points of S carrying ``values``; ``x_grid`` is an
    :class:`XGrid` containing them or an inflation factor, in which case the
    grid extends the axes of ``s_nodes`` by whole cells.
    """
    s_nodes = np.atleast_2d(as_points(s_nodes, problem.n).reshape(-1, problem.n))
    values = np.asarray(values, dtype=float).ravel()
    if values.shape[0] != s_nodes.shape[0]:
        raise DomainError("one value per node required")
    if not isinstance(x_grid, XGrid):
        x_grid = _extend_axes(problem, s_nodes, float(x_grid))
    idx = x_grid.index_of(s_nodes)
    inst = build_feasibility_lp(problem, x_grid, idx, values)
    sol = solve_lp(inst, method=method)
    if sol.status == OPTIMAL:
        return FeasibilityVerdict(True, status=sol.status, extension=sol.values)
    if sol.status == INFEASIBLE:
        return FeasibilityVerdict(False, status=sol.status)
    raise SolverError(f"feasibility LP ended with status {sol.status}")


def _extend_axes(problem, s_nodes, rho):
    X = inflate_domain(problem, rho)
    axes = []
    for i in range(problem.n):
        ax = np.unique(s_nodes[:, i])
        if ax.size < 2:
            raise ConstructionError("need at least two distinct coordinates per axis")
        step = float(np.min(np.diff(ax)))
        left = int(math.ceil((ax[0] - X.lo[i]) / step - 1e-9))
        right = int(math.ceil((X.hi[i] - ax[-1]) / step - 1e-9))
        axes.append(np.concatenate([ax[0] - step * np.arange(left, 0, -1), ax,
                                    ax[-1] + step * np.arange(1, right + 1)]))
    return XGrid(axes)


# --------------------------------------------------------------------------
# mechanisms


@dataclass
class Mechanism:
    """One lottery per menu piece; a report goes to the piece maximizing the menu.

    No consistency between lotteries and intercepts is enforced here (so that
    deliberately broken mechanisms can be examined); :func:`build_mechanism`
    is the checked constructor.
    """

    menu: Menu
    lotteries: list
    means: np.ndarray = field(init=False)
    expected_b: np.ndarray = field(init=False)
    curvature: object = field(default_factory=Quadratic)

    def __post_init__(self):
        if len(self.lotteries) != len(self.menu):
            raise ConstructionError("one lottery per menu piece required")
        self.means = np.stack([lot.mean for lot in self.lotteries])
        curv = self.curvature
        self.expected_b = np.array([lot.expected_b(curv) for lot in self.lotteries])

    @property
    def n(self) -> int:
        return self.menu.n

    def assign(self, s):
        """Piece index for each report (lowest index on ties)."""
        return menu_eval(self.menu, s)[1]

    def expected_action(self, s) -> np.ndarray:
        return self.means[self.assign(s)]

    def agent_payoff(self, s, report=None) -> np.ndarray:
        s = as_points(s, self.n)
        k = self.assign(s if report is None else report)
        return np.sum(self.means[k] * s, axis=-1) + self.expected_b[k]

    def principal_payoff(self, problem: DelegationProblem, s) -> np.ndarray:
        s = as_points(s, self.n)
        k = self.assign(s)
        return np.sum(self.means[k] * problem.g(s), axis=-1) + problem.kappa * self.expected_b[k]

    def to_dict(self) -> dict:
        out = []
        for a, c, lot in zip(self.menu.actions, self.menu.intercepts, self.lotteries):
            out.append({"action": a.tolist(), "intercept": float(c),
                        "lottery": [{"action": x.tolist(), "prob": p} for x, p in lot.atoms()]})
        return {"pieces": out}


def burn_lottery(problem: DelegationProblem, a, burn: float, direction=None) -> Lottery:
    """Two-point lottery with mean ``a`` whose expected b is ``b(a) - burn``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if burn < -FEASIBILITY_TOL:
        raise DomainError(f"negative burn {burn!r}: intercept exceeds b(a)")
    if burn <= ZERO_BURN:
        return Lottery.point(a)
    e = np.zeros(a.shape[0])
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    curv = problem.curvature
    if curv.quadratic:
        d = math.sqrt(2.0 * burn)
    else:
        ba = float(curv.b(a))
        phi = lambda t: 0.5 * (float(curv.b(a + t * e)) + float(curv.b(a - t * e))) - ba + burn
        hi = 1.0
        while phi(hi) > 0:
            hi *= 2.0
            if hi > 1e12:
                raise DomainError("could not bracket the lottery spread")
        d = optimize.brentq(phi, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return Lottery(np.stack([a + d * e, a - d * e]), np.array([0.5, 0.5]))


def build_mechanism(problem: DelegationProblem, menu: Menu, direction=None) -> Mechanism:
    """Implement a feasible menu: each piece becomes a lottery with mean a_k and E[b] = c_k."""
    verdict = check_feasible_menu(problem, menu)
    if not verdict.feasible:
        k = int(verdict.violating[0])
        raise DomainError(f"menu piece {k} has intercept above b(a) (burn {verdict.burns[k]:.3e})")
    lots = [burn_lottery(problem, a, max(float(bu), 0.0), direction)
            for a, bu in zip(menu.actions, verdict.burns)]
    return Mechanism(menu, lots, curvature=problem.curvature)


# --------------------------------------------------------------------------
# incentive compatibility


@dataclass
class ICReport:
    max_violation: float
    worst_pair: tuple
    indirect_utility: np.ndarray
    menu_values: np.ndarray
    max_menu_gap: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol and self.max_menu_gap <= self.tol

    def to_dict(self) -> dict:
        return {"passed": self.passed, "max_violation": self.max_violation,
                "worst_pair": list(self.worst_pair), "max_menu_gap": self.max_menu_gap,
                "tol": self.tol}


def check_incentive_compatibility(problem: DelegationProblem, mechanism: Mechanism,
                                  report_grid, tol: float = 1e-9) -> ICReport:
    """Brute force over every (type, report) pair of the grid."""
    grid = as_points(report_grid, problem.n).reshape(-1, problem.n)
    if not np.all(problem.state_space.contains(grid, 1e-12)):
        raise DomainError("report grid must lie in the state space")
    k = mechanism.assign(grid)
    means = mechanism.means[k]
    eb = mechanism.expected_b[k]
    payoff = grid @ means.T + eb[None, :]
    truthful = np.diag(payoff).copy()
    gain = payoff - truthful[:, None]
    flat = int(np.argmax(gain))
    i, j = divmod(flat, gain.shape[1])
    menu_vals, _ = menu_eval(mechanism.menu, grid)
    gap = float(np.max(np.abs(truthful - menu_vals)))
    return ICReport(max(float(gain[i, j]), 0.0), (i, j), truthful, menu_vals, gap, tol)


# --------------------------------------------------------------------------
# common menus


def delegation_set_menu(problem: DelegationProblem, actions) -> Menu:
    """Free choice from a finite action set: pieces ``(a, b(a))``."""
    acts = as_points(actions, problem.n).reshape(-1, problem.n)
    return Menu(acts, problem.b(acts))


def interval_menu(problem: DelegationProblem, lo: float, hi: float, count: int = 201) -> Menu:
    """Delegation to ``[lo, hi]`` sampled at ``count`` evenly spaced actions."""
    if problem.n != 1:
        raise DomainError("interval menus are one-dimensional")
    if not lo < hi:
        raise DomainError(f"need lo < hi, got [{lo}, {hi}]")
    return delegation_set_menu(problem, np.linspace(lo, hi, count))


def interval_menu_on_nodes(problem: DelegationProblem, lo: float, hi: float, nodes) -> Menu:
    """Delegation to ``[lo, hi]`` using the grid nodes inside it plus both endpoints.

    Endpoints within 1e-9 (relative) of a node are moved onto it, so that the
    kinks of U coincide with nodes.
    """
    nodes = np.asarray(nodes, dtype=float).ravel()
    snap = 1e-9 * max(1.0, float(np.ptp(nodes)))
    lo = _snap(lo, nodes, snap)
    hi = _snap(hi, nodes, snap)
    inner = nodes[(nodes > lo) & (nodes < hi)]
    acts = np.unique(np.concatenate([[lo], inner, [hi]]))
    return delegation_set_menu(problem, acts)


def _snap(x, nodes, tol):
    j = int(np.argmin(np.abs(nodes - x)))
    return float(nodes[j]) if abs(nodes[j] - x) <= tol else float(x)


def constant_menu(problem: DelegationProblem, action=None) -> Menu:
    """Everybody gets ``action`` (default 0) with no burn."""
    a = np.zeros(problem.n) if action is None else np.atleast_1d(np.asarray(action, dtype=float))
    return delegation_set_menu(problem, a[None, :])


def random_feasible_menu(rng: np.random.Generator, problem: DelegationProblem,
                         pieces: int, max_burn: float = 0.25) -> Menu:
    """Pieces with actions uniform on [-1, 1]^n and burns uniform on [0, max_burn]."""
    a = rng.uniform(-1.0, 1.0, size=(pieces, problem.n))
    burn = rng.uniform(0.0, max_burn, size=pieces)
    return Menu(a, problem.b(a) - burn)
