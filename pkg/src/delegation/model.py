"""Problem primitives: state space, density, principal target, curvature.

The agent's payoff is ``a.s + b(a)`` and the principal's is
``a.g(s) + kappa * b(a)``; both extend linearly to lotteries over actions.
All array-valued callables accept points of shape ``(..., n)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import DomainError, SolverError, ValidationError

NEWTON_MAX_ITER = 100
NEWTON_TOL = 1e-12
DENSITY_MASS_TOL = 1e-6


def as_points(s, n: int) -> np.ndarray:
    """Coerce ``s`` to a float array whose trailing axis has length ``n``."""
    arr = np.asarray(s, dtype=float)
    if n == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != n:
        raise DomainError(f"expected points of dimension {n}, got shape {arr.shape}")
    return arr


# --------------------------------------------------------------------------
# state space


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod_i [lo_i, hi_i]``."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in np.atleast_1d(self.lo))
        hi = tuple(float(x) for x in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not lo:
            raise ValidationError("box bounds must be non-empty and of equal length")
        if not all(np.isfinite(lo + hi)):
            raise ValidationError("box bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValidationError(f"box needs lo < hi on every axis, got {lo}, {hi}")

    @classmethod
    def cube(cls, lo: float, hi: float, n: int) -> "Box":
        return cls((lo,) * n, (hi,) * n)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def lo_arr(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_arr(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo_arr + self.hi_arr)

    @property
    def widths(self) -> np.ndarray:
        return self.hi_arr - self.lo_arr

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, s, tol: float = 0.0) -> np.ndarray:
        s = as_points(s, self.n)
        return np.all((s >= self.lo_arr - tol) & (s <= self.hi_arr + tol), axis=-1)

    def is_interior(self, s, tol: float = 0.0) -> np.ndarray:
        s = as_points(s, self.n)
        return np.all((s > self.lo_arr + tol) & (s < self.hi_arr - tol), axis=-1)

    def scaled(self, rho: float) -> "Box":
        half = 0.5 * rho * self.widths
        return Box(tuple(self.center - half), tuple(self.center + half))


# --------------------------------------------------------------------------
# densities


class Density:
    """Density interface: ``pdf`` and its gradient ``grad``."""

    name = "analytic"

    def pdf(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int, box: Box) -> np.ndarray:
        raise DomainError(f"no sampler for density {self.name!r}")


@dataclass(frozen=True)
class Uniform(Density):
    box: Box
    name = "uniform"

    def pdf(self, s):
        s = as_points(s, self.box.n)
        inside = self.box.contains(s)
        return np.where(inside, 1.0 / self.box.volume, 0.0)

    def grad(self, s):
        s = as_points(s, self.box.n)
        return np.zeros_like(s)

    def sample(self, rng, size, box):
        u = rng.random((size, box.n))
        return box.lo_arr + u * box.widths


@dataclass(frozen=True)
class TruncatedNormal(Density):
    """Product of independent normals truncated to the box (logconcave)."""

    box: Box
    mean: tuple
    sd: tuple
    name = "truncnormal"

    def __post_init__(self):
        n = self.box.n
        mean = tuple(np.broadcast_to(np.atleast_1d(np.asarray(self.mean, float)), (n,)))
        sd = tuple(np.broadcast_to(np.atleast_1d(np.asarray(self.sd, float)), (n,)))
        if any(x <= 0 for x in sd):
            raise ValidationError("truncated normal needs sd > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @property
    def _z(self) -> np.ndarray:
        m, sd = np.array(self.mean), np.array(self.sd)
        a = (self.box.lo_arr - m) / sd
        b = (self.box.hi_arr - m) / sd
        return np.prod((special.ndtr(b) - special.ndtr(a)) * sd)

    def pdf(self, s):
        s = as_points(s, self.box.n)
        m, sd = np.array(self.mean), np.array(self.sd)
        q = np.sum(((s - m) / sd) ** 2, axis=-1)
        val = np.exp(-0.5 * q) / (np.sqrt(2 * np.pi) ** self.box.n * self._z)
        return np.where(self.box.contains(s), val, 0.0)

    def grad(self, s):
        s = as_points(s, self.box.n)
        m, sd = np.array(self.mean), np.array(self.sd)
        return self.pdf(s)[..., None] * (-(s - m) / sd**2)

    def sample(self, rng, size, box):
        m, sd = np.array(self.mean), np.array(self.sd)
        a = (box.lo_arr - m) / sd
        b = (box.hi_arr - m) / sd
        u = rng.random((size, box.n))
        lo, hi = special.ndtr(a), special.ndtr(b)
        return m + sd * special.ndtri(lo + u * (hi - lo))


@dataclass(frozen=True)
class NormalMixture(Density):
    """One-dimensional normal mixture truncated to an interval."""

    box: Box
    weights: tuple
    means: tuple
    sds: tuple
    name = "mixture"

    def __post_init__(self):
        if self.box.n != 1:
            raise ValidationError("normal mixture densities are one-dimensional")
        for attr in ("weights", "means", "sds"):
            object.__setattr__(self, attr, tuple(float(x) for x in getattr(self, attr)))
        if not (len(self.weights) == len(self.means) == len(self.sds) >= 1):
            raise ValidationError("mixture parameter lists must have equal length")
        if any(w < 0 for w in self.weights) or any(x <= 0 for x in self.sds):
            raise ValidationError("mixture needs weights >= 0 and sds > 0")

    def _components(self, x):
        w, m, sd = (np.array(v) for v in (self.weights, self.means, self.sds))
        lo, hi = self.box.lo[0], self.box.hi[0]
        mass = np.sum(w * (stats.norm.cdf(hi, m, sd) - stats.norm.cdf(lo, m, sd)))
        comp = w * stats.norm.pdf(x[..., None], m, sd) / mass
        return comp, m, sd

    def pdf(self, s):
        s = as_points(s, 1)
        comp, _, _ = self._components(s[..., 0])
        return np.where(self.box.contains(s), comp.sum(axis=-1), 0.0)

    def grad(self, s):
        s = as_points(s, 1)
        x = s[..., 0]
        comp, m, sd = self._components(x)
        d = np.sum(comp * (-(x[..., None] - m) / sd**2), axis=-1)
        return np.where(self.box.contains(s), d, 0.0)[..., None]


@dataclass(frozen=True)
class AnalyticDensity(Density):
    """User-supplied density with its analytic gradient."""

    pdf_fn: Callable
    grad_fn: Callable
    sampler: Optional[Callable] = None
    name = "analytic"

    def pdf(self, s):
        return np.asarray(self.pdf_fn(s), dtype=float)

    def grad(self, s):
        return np.asarray(self.grad_fn(s), dtype=float)

    def sample(self, rng, size, box):
        if self.sampler is None:
            return super().sample(rng, size, box)
        return np.asarray(self.sampler(rng, size), dtype=float)


# --------------------------------------------------------------------------
# principal's target g


class Bias:
    name = "analytic"

    def g(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def divergence(self, s: np.ndarray) -> np.ndarray:
        return np.trace(self.jacobian(s), axis1=-2, axis2=-1)


@dataclass(frozen=True)
class LinearBias(Bias):
    """g(s) = alpha * s."""

    alpha: float
    name = "linear"

    def g(self, s):
        return self.alpha * np.asarray(s, dtype=float)

    def jacobian(self, s):
        s = np.asarray(s, dtype=float)
        return self.alpha * np.broadcast_to(np.eye(s.shape[-1]), s.shape + (s.shape[-1],))

    def divergence(self, s):
        s = np.asarray(s, dtype=float)
        return np.full(s.shape[:-1], self.alpha * s.shape[-1])


@dataclass(frozen=True)
class AffineBias(Bias):
    """g(s) = s + beta (constant bias)."""

    beta: tuple
    name = "affine"

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(x) for x in np.atleast_1d(self.beta)))

    def g(self, s):
        s = np.asarray(s, dtype=float)
        return s + np.broadcast_to(np.array(self.beta), s.shape[-1:])

    def jacobian(self, s):
        s = np.asarray(s, dtype=float)
        return np.broadcast_to(np.eye(s.shape[-1]), s.shape + (s.shape[-1],))

    def divergence(self, s):
        s = np.asarray(s, dtype=float)
        return np.full(s.shape[:-1], float(s.shape[-1]))


@dataclass(frozen=True)
class AnalyticBias(Bias):
    g_fn: Callable
    jac_fn: Callable
    name = "analytic"

    def g(self, s):
        return np.asarray(self.g_fn(s), dtype=float)

    def jacobian(self, s):
        return np.asarray(self.jac_fn(s), dtype=float)


# --------------------------------------------------------------------------
# curvature b


class Curvature:
    """Strictly concave action cost ``b`` with its gradient."""

    quadratic = False

    def b(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, a: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, a: np.ndarray) -> np.ndarray:
        """Hessian of b at a single point; finite differences of ``grad`` by default."""
        a = np.asarray(a, dtype=float)
        n = a.shape[-1]
        eps = 1e-6 * max(1.0, float(np.max(np.abs(a))))
        cols = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = eps
            cols.append((self.grad(a + e) - self.grad(a - e)) / (2 * eps))
        H = np.stack(cols, axis=-1)
        return 0.5 * (H + H.T)

    def first_best_action(self, s: np.ndarray) -> np.ndarray:
        """argmax_a a.s + b(a) by damped Newton, one point at a time."""
        s = np.asarray(s, dtype=float)
        flat = s.reshape(-1, s.shape[-1])
        out = np.empty_like(flat)
        for k, sk in enumerate(flat):
            out[k] = self._newton(sk)
        return out.reshape(s.shape)

    def _newton(self, s: np.ndarray) -> np.ndarray:
        a = s.copy()
        obj = lambda x: float(x @ s + self.b(x))
        res = np.inf
        for _ in range(NEWTON_MAX_ITER):
            r = s + self.grad(a)
            res = float(np.linalg.norm(r))
            if res <= NEWTON_TOL:
                return a
            step = -np.linalg.solve(self.hess(a), r)
            t, f0 = 1.0, obj(a)
            while t > 1e-12 and obj(a + t * step) < f0 - 1e-15 * (1 + abs(f0)):
                t *= 0.5
            a = a + t * step
        res = float(np.linalg.norm(s + self.grad(a)))
        if res <= NEWTON_TOL:
            return a
        raise SolverError(f"first-best Newton iteration did not converge (residual {res:.3e})",
                          residual=res)

    def first_best_payoff(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        a = self.first_best_action(s)
        return np.sum(a * s, axis=-1) + self.b(a)

    def touch_point(self, a: np.ndarray) -> np.ndarray:
        """The type whose first-best action is ``a``, i.e. ``-grad b(a)``."""
        return -self.grad(np.asarray(a, dtype=float))


@dataclass(frozen=True)
class Quadratic(Curvature):
    """b(a) = -|a|^2 / 2, so h(s) = |s|^2 / 2 and the first-best action is s."""

    quadratic = True
    name = "quadratic"

    def b(self, a):
        a = np.asarray(a, dtype=float)
        return -0.5 * np.sum(a * a, axis=-1)

    def grad(self, a):
        return -np.asarray(a, dtype=float)

    def hess(self, a):
        a = np.asarray(a, dtype=float)
        return -np.eye(a.shape[-1])

    def first_best_action(self, s):
        return np.array(s, dtype=float)

    def first_best_payoff(self, s):
        s = np.asarray(s, dtype=float)
        return 0.5 * np.sum(s * s, axis=-1)

    def touch_point(self, a):
        return np.array(a, dtype=float)


@dataclass(frozen=True)
class AnalyticCurvature(Curvature):
    """User-supplied b with gradient (and optionally Hessian).

    Lipschitz gradient and superlinear decay of b are the caller's obligation.
    """

    b_fn: Callable
    grad_fn: Callable
    hess_fn: Optional[Callable] = None
    name = "analytic"

    def b(self, a):
        return np.asarray(self.b_fn(np.asarray(a, dtype=float)), dtype=float)

    def grad(self, a):
        return np.asarray(self.grad_fn(np.asarray(a, dtype=float)), dtype=float)

    def hess(self, a):
        if self.hess_fn is None:
            return super().hess(a)
        return np.asarray(self.hess_fn(np.asarray(a, dtype=float)), dtype=float)


# --------------------------------------------------------------------------
# the problem


def _box_quadrature(box: Box, order: int = 48):
    x, w = np.polynomial.legendre.leggauss(order)
    axes, weights = [], []
    for lo, hi in zip(box.lo, box.hi):
        axes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.n)
    wts = np.prod(np.stack(np.meshgrid(*weights, indexing="ij"), axis=-1), axis=-1).ravel()
    return pts, wts


@dataclass(frozen=True)
class DelegationProblem:
    """One delegation instance: state box, density, target g, weight kappa, curvature b."""

    state_space: Box
    density: Density
    bias: Bias
    kappa: float = 1.0
    curvature: Curvature = field(default_factory=Quadratic)

    def __post_init__(self):
        if not isinstance(self.state_space, Box):
            raise ValidationError("state_space must be a Box")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ValidationError(f"kappa must be positive, got {self.kappa}")
        if self.n <= 3:
            pts, wts = _box_quadrature(self.state_space, 48 if self.n <= 2 else 16)
            mass = float(np.sum(wts * self.density.pdf(pts)))
            if abs(mass - 1.0) > DENSITY_MASS_TOL:
                raise ValidationError(f"density integrates to {mass:.8f}, not 1")

    @property
    def n(self) -> int:
        return self.state_space.n

    def f(self, s) -> np.ndarray:
        return self.density.pdf(as_points(s, self.n))

    def grad_f(self, s) -> np.ndarray:
        return self.density.grad(as_points(s, self.n))

    def g(self, s) -> np.ndarray:
        return self.bias.g(as_points(s, self.n))

    def b(self, a) -> np.ndarray:
        return self.curvature.b(as_points(a, self.n))

    def h(self, s) -> np.ndarray:
        return first_best_payoff(self, s)

    def with_density_scale(self, c: float) -> "DelegationProblem":
        """Same problem with f multiplied by ``c`` (skips the mass check)."""
        dens = self.density
        scaled = AnalyticDensity(lambda s: c * dens.pdf(s), lambda s: c * dens.grad(s))
        obj = object.__new__(DelegationProblem)
        for name, val in (("state_space", self.state_space), ("density", scaled),
                          ("bias", self.bias), ("kappa", self.kappa),
                          ("curvature", self.curvature)):
            object.__setattr__(obj, name, val)
        return obj


def uniform_linear_problem(n: int = 1, alpha: float = 0.5, kappa: float = 1.0,
                           half_width: float = 0.5) -> DelegationProblem:
    """Uniform density on the centered cube, g(s) = alpha s, quadratic b."""
    box = Box.cube(-half_width, half_width, n)
    return DelegationProblem(box, Uniform(box), LinearBias(alpha), kappa)


def first_best_payoff(problem: DelegationProblem, s) -> np.ndarray:
    """h(s) = sup_a a.s + b(a)."""
    return problem.curvature.first_best_payoff(as_points(s, problem.n))


def first_best_action(problem: DelegationProblem, s) -> np.ndarray:
    return problem.curvature.first_best_action(as_points(s, problem.n))


# --------------------------------------------------------------------------
# lotteries and payoffs


@dataclass(frozen=True)
class Lottery:
    """Finite lottery over actions: ``actions`` (k, n) with ``probs`` (k,)."""

    actions: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        actions = np.atleast_2d(np.asarray(self.actions, dtype=float))
        probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if actions.shape[0] != probs.shape[0] or probs.size == 0:
            raise DomainError("lottery needs at least one atom and one probability per atom")
        if np.any(probs < 0) or np.any(probs > 1):
            raise DomainError("lottery probabilities must lie in [0, 1]")
        if abs(float(np.sum(probs)) - 1.0) > 1e-12:
            raise DomainError(f"lottery probabilities sum to {np.sum(probs)!r}")
        actions.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point(cls, a) -> "Lottery":
        return cls(np.atleast_1d(np.asarray(a, dtype=float))[None, :], np.ones(1))

    @classmethod
    def from_atoms(cls, atoms: Sequence) -> "Lottery":
        acts = [np.atleast_1d(np.asarray(a, dtype=float)) for a, _ in atoms]
        return cls(np.stack(acts), np.array([p for _, p in atoms], dtype=float))

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.actions

    def expected_b(self, curvature: Curvature) -> float:
        return float(self.probs @ curvature.b(self.actions))

    def atoms(self):
        return [(a.copy(), float(p)) for a, p in zip(self.actions, self.probs)]


def agent_payoff(problem: DelegationProblem, lottery: Lottery, s) -> float:
    """E[a].s + E[b(a)]."""
    s = as_points(s, problem.n)
    return float(lottery.mean @ s + lottery.expected_b(problem.curvature))


def principal_payoff(problem: DelegationProblem, lottery: Lottery, s) -> float:
    """E[a].g(s) + kappa E[b(a)]."""
    s = as_points(s, problem.n)
    return float(lottery.mean @ problem.g(s) + problem.kappa * lottery.expected_b(problem.curvature))
