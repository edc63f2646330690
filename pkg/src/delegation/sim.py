"""Monte Carlo and grid cross-checks of principal payoffs.

States are drawn with a counter-based generator (Philox keyed by the seed and
the chunk number), so results depend only on the seed and the sample count.
Lotteries are never sampled: payoffs are linear in the lottery, so each state
contributes its exact conditional expectation.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .measure import GridSpec, discretize_measure, integrate
from .mech import Menu, menu_eval
from .model import DelegationProblem, as_points, first_best_action, first_best_payoff

CHUNK = 1 << 16


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    """Independent stream for one chunk of samples."""
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(chunk)))


def _inverse_cdf_sampler(problem: DelegationProblem, points: int = 20001):
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    x = np.linspace(lo, hi, points)
    f = np.asarray(problem.f(x[:, None]), dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
    cdf /= cdf[-1]
    return lambda rng, size: np.interp(rng.random(size), cdf, x)[:, None]


def _sampler(problem: DelegationProblem):
    dens, box = problem.density, problem.state_space
    try:
        dens.sample(np.random.default_rng(0), 1, box)
        return lambda rng, size: dens.sample(rng, size, box)
    except DomainError:
        if problem.n == 1:
            return _inverse_cdf_sampler(problem)
        raise


def sample_states(problem: DelegationProblem, samples: int, seed: int, threads: int = 1):
    """All sampled states in chunk order; identical for any thread count."""
    if samples < 1:
        raise DomainError("need at least one sample")
    draw = _sampler(problem)
    sizes = [min(CHUNK, samples - j) for j in range(0, samples, CHUNK)]
    job = lambda j: draw(chunk_rng(seed, j), sizes[j])
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(j) for j in range(len(sizes))]
    return np.concatenate(parts).reshape(samples, problem.n)


def _mean_se(values: np.ndarray):
    n = values.size
    mean = math.fsum(values) / n
    if n == 1:
        return mean, float("nan")
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def mc_principal_payoff(problem: DelegationProblem, mechanism, samples: int, seed: int,
                        threads: int = 1):
    """``(estimate, standard error)`` of the principal's expected payoff.

    ``mechanism`` is anything with ``principal_payoff(problem, states)``.
    """
    s = sample_states(problem, samples, seed, threads)
    vals = np.asarray(mechanism.principal_payoff(problem, s), dtype=float).ravel()
    return _mean_se(vals)


def mc_payoff_difference(problem: DelegationProblem, first, second, samples: int, seed: int,
                         threads: int = 1):
    """Paired estimate of ``payoff(first) - payoff(second)`` on common states."""
    s = sample_states(problem, samples, seed, threads)
    d = (np.asarray(first.principal_payoff(problem, s), dtype=float).ravel()
         - np.asarray(second.principal_payoff(problem, s), dtype=float).ravel())
    return _mean_se(d)


@dataclass
class IdentityCheck:
    direct: float
    via_measure: float

    @property
    def residual(self) -> float:
        return abs(self.direct - self.via_measure)

    def to_dict(self) -> dict:
        return {"direct": self.direct, "via_measure": self.via_measure, "residual": self.residual}


class FirstBestUtility:
    """U = h, with gradient the first-best action."""

    def __init__(self, problem: DelegationProblem):
        self.problem = problem

    def value(self, s):
        return first_best_payoff(self.problem, s)

    def gradient(self, s):
        return first_best_action(self.problem, s)


class IntervalUtility:
    """U of delegating to [s1, s2] in one dimension; the gradient is the chosen action."""

    def __init__(self, problem: DelegationProblem, s1: float, s2: float):
        if problem.n != 1:
            raise DomainError("interval delegation is one-dimensional")
        self.problem = problem
        self.s1, self.s2 = float(s1), float(s2)

    def gradient(self, s):
        return np.clip(first_best_action(self.problem, s), self.s1, self.s2)

    def value(self, s):
        s = as_points(s, 1)
        a = self.gradient(s)
        return np.sum(a * s, axis=-1) + self.problem.b(a)


class MenuUtility:
    """U = max of the menu's affine pieces, with gradient the active slope."""

    def __init__(self, menu: Menu):
        self.menu = menu

    def value(self, s):
        return menu_eval(self.menu, s)[0]

    def gradient(self, s):
        return self.menu.actions[menu_eval(self.menu, s)[1]]


def _as_utility(U):
    return MenuUtility(U) if isinstance(U, Menu) else U


def direct_payoff_grid(problem: DelegationProblem, U, grid) -> float:
    """Midpoint rule on grid cells of ``grad U . (g - kappa s) + kappa U`` against f.

    ``U`` is a :class:`Menu` or an object with ``value`` and ``gradient``.
    """
    U = _as_utility(U)
    spec = GridSpec.uniform(grid, problem.n) if isinstance(grid, int) else grid
    axes = spec.axes(problem.state_space)
    mids = [0.5 * (ax[1:] + ax[:-1]) for ax in axes]
    widths = [np.diff(ax) for ax in axes]
    pts = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, problem.n)
    vol = np.prod(np.stack(np.meshgrid(*widths, indexing="ij"), axis=-1), axis=-1).ravel()
    slope = U.gradient(pts)
    drift = problem.g(pts) - problem.kappa * pts
    integrand = np.sum(slope * drift, axis=-1) + problem.kappa * U.value(pts)
    return math.fsum(integrand * problem.f(pts) * vol)


def divergence_identity_check(problem: DelegationProblem, U, grid) -> IdentityCheck:
    """Compare the direct payoff of U with ``int U dmu`` on the same grid."""
    mu = discretize_measure(problem, grid)
    vals = _as_utility(U).value(mu.nodes)
    return IdentityCheck(direct_payoff_grid(problem, U, grid), integrate(mu, vals))


class MenuPayoff:
    """Adapter giving a bare menu the payoff of its burn-free implementation."""

    def __init__(self, menu: Menu):
        self.menu = menu

    def principal_payoff(self, problem: DelegationProblem, s):
        s = as_points(s, problem.n)
        U, k = menu_eval(self.menu, s)
        a = self.menu.actions[k]
        return np.sum(a * problem.g(s), axis=-1) + problem.kappa * self.menu.intercepts[k]
