"""Optimal convex delegation sets in two dimensions under quadratic payoffs.

With quadratic curvature a type outside the delegation set A picks its nearest
point of A, so the types pooled at a boundary point p form the ray from p
along the outward normal. Optimality asks that the part of mu on each such ray
has zero first moment about p (and nonpositive stop-loss moments beyond p).

The rays are realized on a polygon by "sectors": vertex k owns the region
between the normal lines through the midpoints of its two edges, split by its
own (bisector) normal. Sectors tile the complement of A, so summing over them
reproduces mu exactly. The abscissa of a point q in the sector of p is
``(q - p) . n_k``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DomainError, PreconditionError, SolverError
from .geometry import (
    BoundaryCurve,
    clip_halfplane,
    clip_segment,
    clip_to_box,
    polygon_moments,
    project_onto_polygon,
    signed_area,
    symmetry_residual,
    triangle_fan_points,
)
from .measure import nu_interior
from .model import AffineBias, DelegationProblem, LinearBias, Uniform

CONVERGED = "converged"
NOT_CONVERGED = "not-converged"
DAMPING = 0.5


class RayDisintegration:
    """Sector integrals of mu for a two-dimensional box problem."""

    def __init__(self, problem: DelegationProblem):
        if problem.n != 2:
            raise PreconditionError("ray disintegration is two-dimensional")
        self.problem = problem
        box = problem.state_space
        self.lo = box.lo
        self.hi = box.hi
        self.reach = 4.0 * float(np.max(box.widths))
        simple = isinstance(problem.density, Uniform) and isinstance(problem.bias, (LinearBias, AffineBias))
        self.nu_const = None
        if simple:
            self.nu_const = float(nu_interior(problem, box.center))
        (x0, y0), (x1, y1) = self.lo, self.hi
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        self.faces = []
        for i in range(4):
            a, b = corners[i], corners[(i + 1) % 4]
            d = (b[0] - a[0], b[1] - a[1])
            length = math.hypot(*d)
            normal = (d[1] / length, -d[0] / length)
            nb = None
            if simple:
                mid = np.array([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])
                drift = problem.bias.g(mid) - problem.kappa * mid
                nb = float(drift @ np.array(normal)) * float(problem.density.pdf(mid))
            self.faces.append((a, b, normal, nb))
        self._gl = np.polynomial.legendre.leggauss(6)

    # -- pieces ------------------------------------------------------------
    def sector(self, V: np.ndarray, k: int, nk) -> list:
        """The two convex quads (CCW) forming the sector of vertex k, clipped to S."""
        m = V.shape[0]
        p = V[k]
        a = V[k - 1]
        c = V[(k + 1) % m]
        R = self.reach
        n1 = _edge_normal(a, p)
        n2 = _edge_normal(p, c)
        m1 = 0.5 * (a + p)
        m2 = 0.5 * (p + c)
        q1 = [tuple(m1), tuple(m1 + R * n1), tuple(p + R * nk), tuple(p)]
        q2 = [tuple(p), tuple(p + R * nk), tuple(m2 + R * n2), tuple(m2)]
        out = []
        for q in (q1, q2):
            if signed_area(q) < 0:
                q = q[::-1]
            out.append(q)
        return out

    def _interior(self, poly, p, nk, z, absolute: bool):
        """``int (x - z) dmu`` (or ``int |x - z| d|mu|``) over a polygon, interior part."""
        if len(poly) < 3:
            return 0.0, 0.0
        if self.nu_const is not None:
            A, mx, my = polygon_moments(poly)
            xm = (mx - p[0] * A) * nk[0] + (my - p[1] * A) * nk[1] - z * A
            if absolute:
                return abs(self.nu_const) * abs(xm), abs(self.nu_const) * A
            return self.nu_const * xm, self.nu_const * A
        pts, w = triangle_fan_points(poly)
        nu = np.asarray(nu_interior(self.problem, pts), dtype=float)
        x = (pts - p) @ nk - z
        if absolute:
            return float(np.sum(w * np.abs(nu) * np.abs(x))), float(np.sum(w * np.abs(nu)))
        return float(np.sum(w * nu * x)), float(np.sum(w * nu))

    def _boundary(self, quad, p, nk, z, absolute: bool, side: int):
        """Boundary part of the same integral over the faces of S inside ``quad``.

        ``side`` = +1 keeps ``x >= z``, -1 keeps ``x < z``, 0 keeps everything.
        """
        tot = 0.0
        mass = 0.0
        for a, b, normal, nb in self.faces:
            rng = clip_segment(a, b, quad)
            if rng is None:
                continue
            t0, t1 = rng
            q0 = np.array([a[0] + t0 * (b[0] - a[0]), a[1] + t0 * (b[1] - a[1])])
            q1 = np.array([a[0] + t1 * (b[0] - a[0]), a[1] + t1 * (b[1] - a[1])])
            x0 = float((q0 - p) @ nk) - z
            x1 = float((q1 - p) @ nk) - z
            if side:
                # restrict to the sub-segment on the requested side of x = z
                if x0 == x1:
                    if (x0 >= 0) != (side > 0):
                        continue
                else:
                    u = x0 / (x0 - x1)
                    lo_u, hi_u = (max(0.0, u), 1.0) if side * (x1 - x0) > 0 else (0.0, min(1.0, u))
                    if lo_u >= hi_u:
                        continue
                    q0, q1 = q0 + lo_u * (q1 - q0), q0 + hi_u * (q1 - q0)
                    x0, x1 = x0 + lo_u * (x1 - x0), x0 + hi_u * (x1 - x0)
            length = float(np.hypot(*(q1 - q0)))
            if length == 0.0:
                continue
            if nb is not None:
                xm = 0.5 * (x0 + x1)
                if absolute:
                    tot += abs(nb) * length * abs(xm)
                    mass += abs(nb) * length
                else:
                    tot += nb * length * xm
                    mass += nb * length
            else:
                gx, gw = self._gl
                u = 0.5 * (gx + 1.0)
                pts = q0 + u[:, None] * (q1 - q0)
                drift = self.problem.bias.g(pts) - self.problem.kappa * pts
                nbv = (drift @ np.array(normal)) * self.problem.density.pdf(pts)
                xs = x0 + u * (x1 - x0)
                wts = 0.5 * gw * length
                if absolute:
                    tot += float(np.sum(wts * np.abs(nbv) * np.abs(xs)))
                    mass += float(np.sum(wts * np.abs(nbv)))
                else:
                    tot += float(np.sum(wts * nbv * xs))
                    mass += float(np.sum(wts * nbv))
        return tot, mass

    # -- public ------------------------------------------------------------
    def moment(self, V: np.ndarray, k: int, nk) -> float:
        """First moment about vertex k of mu restricted to its sector."""
        p = V[k]
        tot = 0.0
        for quad in self.sector(V, k, nk):
            clipped = clip_to_box(quad, self.lo, self.hi)
            tot += self._interior(clipped, p, nk, 0.0, False)[0]
            tot += self._boundary(quad, p, nk, 0.0, False, 0)[0]
        return tot

    def moments(self, V: np.ndarray, k: int, nk):
        """(first moment, absolute first moment, mass) of the sector of vertex k."""
        p = V[k]
        mom = absm = mass = 0.0
        for quad in self.sector(V, k, nk):
            clipped = clip_to_box(quad, self.lo, self.hi)
            m_i, w_i = self._interior(clipped, p, nk, 0.0, False)
            m_b, w_b = self._boundary(quad, p, nk, 0.0, False, 0)
            mom += m_i + m_b
            mass += w_i + w_b
            for side in (1, -1):
                part = clip_halfplane(clipped, side * nk[0], side * nk[1], side * float(p @ nk))
                absm += self._interior(part, p, nk, 0.0, True)[0]
                absm += self._boundary(quad, p, nk, 0.0, True, side)[0]
        return mom, absm, mass

    def stop_loss(self, V: np.ndarray, k: int, nk, z: float) -> float:
        """``int (x - z)^+ dmu`` over the sector of vertex k."""
        p = V[k]
        tot = 0.0
        for quad in self.sector(V, k, nk):
            clipped = clip_to_box(quad, self.lo, self.hi)
            part = clip_halfplane(clipped, nk[0], nk[1], float(p @ nk) + z)
            tot += self._interior(part, p, nk, z, False)[0]
            tot += self._boundary(quad, p, nk, z, False, 1)[0]
        return tot

    def reach_along(self, V: np.ndarray, k: int, nk) -> float:
        """Largest abscissa of the sector of vertex k inside S."""
        p = V[k]
        best = 0.0
        for quad in self.sector(V, k, nk):
            for q in clip_to_box(quad, self.lo, self.hi):
                best = max(best, float((np.array(q) - p) @ nk))
        return best


def _edge_normal(a, b) -> np.ndarray:
    d = b - a
    n = np.array([d[1], -d[0]])
    return n / np.linalg.norm(n)


def normalized_residuals(dis: RayDisintegration, V: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Sector first moment divided by the sector's absolute first moment."""
    out = np.zeros(V.shape[0])
    for k in range(V.shape[0]):
        mom, absm, _ = dis.moments(V, k, normals[k])
        out[k] = mom / absm if absm > 0 else 0.0
    return out


# --------------------------------------------------------------------------
# the solver


@dataclass
class BoundaryResult:
    curve: BoundaryCurve
    residuals: np.ndarray
    status: str
    iterations: int
    history: list = field(default_factory=list)
    first_sweep_movement: float = 0.0

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_dict(self) -> dict:
        return {"status": self.status, "iterations": self.iterations,
                "max_residual": self.max_residual, "vertices": len(self.curve),
                "area": self.curve.area(), "symmetry_residual": symmetry_residual(self.curve),
                "history": list(self.history)}


def _check_solver_problem(problem: DelegationProblem):
    if problem.n != 2:
        raise PreconditionError("boundary solver is two-dimensional")
    if not isinstance(problem.density, Uniform):
        raise PreconditionError("boundary solver needs a uniform density")
    if not isinstance(problem.bias, LinearBias) or not 0 < problem.bias.alpha < problem.kappa:
        raise PreconditionError("boundary solver needs g(s) = alpha s with 0 < alpha < kappa")
    if not problem.curvature.quadratic:
        raise PreconditionError("boundary solver needs quadratic curvature")
    box = problem.state_space
    if not (np.allclose(box.center, 0.0) and np.isclose(box.widths[0], box.widths[1])):
        raise PreconditionError("boundary solver needs a centered square state space")


def _step_limits(V, k, nk, box):
    """Range of moves along nk keeping vertex k inside S and the polygon convex."""
    m = V.shape[0]
    p = V[k]
    hi = np.inf
    for i in range(2):
        if nk[i] > 0:
            hi = min(hi, (box.hi[i] - p[i]) / nk[i])
        elif nk[i] < 0:
            hi = min(hi, (box.lo[i] - p[i]) / nk[i])
    lo = -np.inf
    # stay outside the chord of the two neighbours (strict convexity at k)
    lo = max(lo, _line_hit(p, nk, V[k - 1], V[(k + 1) % m], inward=True))
    # stay inside the extensions of the neighbouring edges (convexity at k-1, k+1)
    hi = min(hi, _line_hit(p, nk, V[k - 2], V[k - 1], inward=False))
    hi = min(hi, _line_hit(p, nk, V[(k + 2) % m], V[(k + 1) % m], inward=False))
    return lo, hi


def _line_hit(p, d, a, b, inward: bool) -> float:
    """Signed step t with p + t d on the line through a, b (or +-inf when parallel/behind)."""
    e = b - a
    den = e[0] * d[1] - e[1] * d[0]
    if abs(den) < 1e-300:
        return -np.inf if inward else np.inf
    t = (e[1] * (p[0] - a[0]) - e[0] * (p[1] - a[1])) / den
    if inward:
        return t if t < 0 else -np.inf
    return t if t > 0 else np.inf


def _solve_vertex(dis, V, k, nk, box):
    lo, hi = _step_limits(V, k, nk, box)
    lo = 0.999 * lo if np.isfinite(lo) else -0.5 * float(np.min(box.widths))
    hi = 0.999 * hi if np.isfinite(hi) else 0.5 * float(np.min(box.widths))

    def f(t):
        W = V.copy()
        W[k] = V[k] + t * nk
        return dis.moment(W, k, nk)

    f0 = f(0.0)
    if f0 == 0.0:
        return 0.0
    end = hi if f0 > 0 else lo
    fe = f(end)
    if np.sign(fe) == np.sign(f0):
        return end
    a, b = (0.0, end) if end > 0 else (end, 0.0)
    return optimize.brentq(f, a, b, xtol=1e-13, rtol=1e-12)


def solve_boundary(problem: DelegationProblem, initial: BoundaryCurve, max_iters: int = 200,
                   tol: float = 1e-3, threads: int = 1, damping: float = DAMPING) -> BoundaryResult:
    """Damped Jacobi iteration moving each vertex along its normal to zero its sector moment.

    Every sweep solves, for each vertex with its neighbours held, the scalar
    equation "sector first moment = 0" by a bracketed root finder, then moves
    all vertices by ``damping`` times their steps at once. The iteration stops
    as soon as the normalized residual is below ``tol`` at the start of a
    sweep, so a converged input comes back unchanged.
    """
    _check_solver_problem(problem)
    box = problem.state_space
    if not initial.inside_box(box):
        raise DomainError("initial boundary must lie strictly inside the state space")
    dis = RayDisintegration(problem)
    V = initial.vertices.copy()
    history = []
    first_move = 0.0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for it in range(max_iters + 1):
            curve = BoundaryCurve(V)
            normals = curve.normals()
            res = normalized_residuals(dis, V, normals)
            worst = float(np.max(np.abs(res)))
            history.append(worst)
            if worst <= tol:
                return BoundaryResult(curve, res, CONVERGED, it, history, first_move)
            if it == max_iters:
                break
            job = lambda k: _solve_vertex(dis, V, k, normals[k], box)
            ks = range(V.shape[0])
            steps = np.array(list(pool.map(job, ks)) if pool else [job(k) for k in ks])
            move = damping * steps[:, None] * normals
            if it == 0:
                first_move = float(np.max(np.linalg.norm(move, axis=1)))
            V = V + move
            try:
                BoundaryCurve(V)
            except DomainError as exc:
                raise SolverError(f"iterate {it + 1} lost strict convexity", residual=worst) from exc
    finally:
        if pool:
            pool.shutdown()
    return BoundaryResult(curve, res, NOT_CONVERGED, max_iters, history, first_move)


# --------------------------------------------------------------------------
# delegating to a convex polygon


@dataclass
class ConvexDelegationSet:
    """Each type takes its nearest action in the polygon (quadratic curvature)."""

    curve: BoundaryCurve

    @property
    def n(self) -> int:
        return 2

    def expected_action(self, s) -> np.ndarray:
        return project_onto_polygon(np.asarray(s, dtype=float).reshape(-1, 2), self.curve.vertices)

    def principal_payoff(self, problem: DelegationProblem, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1, 2)
        a = self.expected_action(s)
        return np.sum(a * problem.g(s), axis=-1) + problem.kappa * problem.b(a)

    def agent_payoff(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1, 2)
        a = self.expected_action(s)
        return np.sum(a * s, axis=-1) - 0.5 * np.sum(a * a, axis=-1)


@dataclass
class ProductSet:
    """Delegation to the box ``[lo, hi]`` (coordinatewise clipping, quadratic curvature)."""

    lo: np.ndarray
    hi: np.ndarray

    def expected_action(self, s) -> np.ndarray:
        return np.clip(np.asarray(s, dtype=float), self.lo, self.hi)

    def principal_payoff(self, problem: DelegationProblem, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).reshape(-1, problem.n)
        a = self.expected_action(s)
        return np.sum(a * problem.g(s), axis=-1) + problem.kappa * problem.b(a)


def delegation_set_payoff(problem: DelegationProblem, curve: BoundaryCurve) -> float:
    """Exact expected principal payoff of delegating to a polygon.

    The state space splits into the polygon (action = type), one strip per
    edge (action = foot of the perpendicular) and one wedge per vertex
    (action = vertex); each piece is integrated with a degree-5 triangle rule,
    which is exact for polynomial densities of degree <= 1.
    """
    V = curve.vertices
    box = problem.state_space
    R = 4.0 * float(np.max(box.widths))
    ne = curve.edge_normals()
    m = V.shape[0]
    total = []

    def add(poly, action_fn):
        poly = clip_to_box(poly, box.lo, box.hi)
        pts, w = triangle_fan_points(poly)
        if w.size == 0:
            return
        a = action_fn(pts)
        val = (np.sum(a * problem.g(pts), axis=-1) + problem.kappa * problem.b(a)) * problem.f(pts)
        total.append(math.fsum(w * val))

    add([tuple(v) for v in V], lambda x: x)
    for k in range(m):
        v, u = V[k], V[(k + 1) % m]
        n = ne[k]
        strip = [tuple(v), tuple(v + R * n), tuple(u + R * n), tuple(u)]
        if signed_area(strip) < 0:
            strip = strip[::-1]
        add(strip, lambda x, v=v, n=n: x - ((x - v) @ n)[:, None] * n)
        wedge = [tuple(v), tuple(v + R * ne[k - 1]), tuple(v + R * n)]
        if signed_area(wedge) < 0:
            wedge = wedge[::-1]
        add(wedge, lambda x, v=v: np.broadcast_to(v, x.shape))
    return math.fsum(total)


def product_set_payoff_uniform(problem: DelegationProblem, t: float) -> float:
    """Payoff of delegating to ``[-t, t]^n`` for the uniform linear-bias cube problem."""
    if not (isinstance(problem.density, Uniform) and isinstance(problem.bias, LinearBias)
            and problem.curvature.quadratic):
        raise PreconditionError("closed form needs uniform density, linear bias, quadratic b")
    box = problem.state_space
    half = 0.5 * float(box.widths[0])
    if not (np.allclose(box.center, 0.0) and np.allclose(box.widths, 2 * half)):
        raise PreconditionError("closed form needs a centered cube")
    alpha, kappa = problem.bias.alpha, problem.kappa
    t = min(t, half)
    # one coordinate, density 1/(2 half): inside alpha s^2 - kappa s^2/2, outside alpha t|s| - kappa t^2/2
    inside = 2 * (alpha - 0.5 * kappa) * t ** 3 / 3
    outside = 2 * (alpha * t * (half ** 2 - t ** 2) / 2 - 0.5 * kappa * t ** 2 * (half - t))
    return problem.n * (inside + outside) / (2 * half)
