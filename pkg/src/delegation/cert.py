"""Optimality certificates for delegation mechanisms.

A candidate U certifies itself when, on every region where U is affine, the
restriction of mu has nonnegative mass and is dominated in the convex order by
an atom of that mass at the point where U touches h (or by zero when U never
touches h there). In one dimension convex dominance reduces to mass and mean
equality plus the integrated-cdf inequalities, which is what is checked here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import DomainError, PreconditionError, UnsupportedRegionError
from .lp.problem import duality_gap
from .measure import SignedMeasureGrid, discretize_measure, nu_boundary, nu_interior
from .mech import Menu, check_feasible_menu, menu_eval
from .model import AffineBias, DelegationProblem, first_best_payoff

TOUCH_TOL = 1e-7
CERT_TOL = 1e-6
INTERVAL_TOL = 1e-6
COLLINEAR_TOL = 1e-9
ASSUMPTIONS = ("U is assumed differentiable |mu|-almost everywhere (not verified)",)


# --------------------------------------------------------------------------
# partitions


@dataclass
class Region:
    piece: int
    entries: np.ndarray
    action: np.ndarray
    intercept: float
    touch_point: Optional[np.ndarray]


@dataclass
class PoolingPartition:
    """Measure entries grouped by the menu piece that attains U there."""

    measure: SignedMeasureGrid
    menu: Menu
    regions: list
    piece_of_entry: np.ndarray
    certified: bool = False

    def region_measure(self, region: Region) -> SignedMeasureGrid:
        return self.measure.subset(region.entries)


def extract_partition(problem: DelegationProblem, menu: Menu,
                      measure: SignedMeasureGrid) -> PoolingPartition:
    """Regions of constant affine piece; each touches h at ``-grad b(a_k)`` if its burn is ~0."""
    _, idx = menu_eval(menu, measure.nodes)
    idx = np.atleast_1d(idx)
    burns = menu.burns(problem)
    regions = []
    for k in np.unique(idx):
        a = menu.actions[k]
        z = problem.curvature.touch_point(a)
        hz = float(first_best_payoff(problem, z))
        touch = z if burns[k] <= TOUCH_TOL * (1.0 + abs(hz)) else None
        regions.append(Region(int(k), np.flatnonzero(idx == k), a.copy(),
                              float(menu.intercepts[k]), touch))
    return PoolingPartition(measure, menu, regions, idx)


# --------------------------------------------------------------------------
# one-dimensional convex dominance


@dataclass
class Ray1DMeasure:
    """Signed atoms at increasing abscissae along ``origin + t * direction``."""

    abscissae: np.ndarray
    weights: np.ndarray
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.abscissae = np.asarray(self.abscissae, dtype=float).ravel()
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.abscissae.shape != self.weights.shape:
            raise DomainError("one weight per abscissa required")
        if np.any(np.diff(self.abscissae) <= 0):
            raise DomainError("ray abscissae must be strictly increasing")
        if not np.all(np.isfinite(self.weights)):
            raise DomainError("ray weights must be finite")
        self.origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        self.direction = np.atleast_1d(np.asarray(self.direction, dtype=float))

    @classmethod
    def from_points(cls, points, weights, origin, direction, decimals: int = 12):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.asarray(direction, dtype=float)
        t = (points - np.asarray(origin, dtype=float)) @ d
        key = np.round(t, decimals) + 0.0
        uniq, inv = np.unique(key, return_inverse=True)
        w = np.zeros(uniq.size)
        order = np.argsort(inv, kind="stable")
        cuts = np.flatnonzero(np.diff(inv.ravel()[order])) + 1
        for j, chunk in enumerate(np.split(np.asarray(weights, dtype=float)[order], cuts)):
            w[j] = math.fsum(chunk)
        # keep the exact (unrounded) abscissa of the first entry in each group
        first = np.array([t[order][c] for c in np.concatenate([[0], cuts])])
        return cls(first, w, origin, d)

    @property
    def mass(self) -> float:
        return math.fsum(self.weights)

    @property
    def moment(self) -> float:
        return math.fsum(self.weights * self.abscissae)

    @property
    def total_variation(self) -> float:
        return math.fsum(np.abs(self.weights))


@dataclass
class MajorizationVerdict:
    passed: bool
    mass_residual: float
    moment_residual: float
    max_violation: float
    taus: np.ndarray
    profile: np.ndarray
    reason: str = ""

    @property
    def worst(self) -> float:
        return max(abs(self.mass_residual), abs(self.moment_residual), self.max_violation, 0.0)


def stop_loss_profile(ray: Ray1DMeasure, mass: float, location: float, taus):
    """``sum_j w_j (t_j - tau)^+ - mass (location - tau)^+`` for every tau."""
    taus = np.asarray(taus, dtype=float)
    t, w = ray.abscissae, ray.weights
    out = np.empty(taus.shape)
    for i, tau in enumerate(taus):
        sel = t > tau
        out[i] = math.fsum(w[sel] * (t[sel] - tau)) - mass * max(location - tau, 0.0)
    return out


def check_majorization_1d(ray: Ray1DMeasure, delta_mass: float, delta_location: float,
                          tol: float = 1e-9, scale: Optional[float] = None) -> MajorizationVerdict:
    """Is ``ray <=_cx delta_mass * delta(delta_location)``?

    Masses and first moments must agree and the stop-loss transform of the ray
    measure must lie below that of the atom at every kink. Tolerances are
    relative to ``scale`` (default: total variation of both measures).
    """
    if scale is None:
        scale = ray.total_variation + abs(delta_mass)
    scale = max(scale, np.finfo(float).tiny)
    span = 1.0
    if ray.abscissae.size:
        span = max(1.0, float(np.max(np.abs(ray.abscissae))), abs(delta_location))
    mass_res = ray.mass - delta_mass
    moment_res = ray.moment - delta_mass * delta_location
    taus = np.union1d(ray.abscissae, [delta_location])
    prof = stop_loss_profile(ray, delta_mass, delta_location, taus)
    viol = max(float(np.max(prof, initial=0.0)), 0.0)
    reasons = []
    if abs(mass_res) > tol * scale:
        reasons.append("mass mismatch")
    if abs(moment_res) > tol * scale * span:
        reasons.append("barycenter mismatch")
    if viol > tol * scale * span:
        reasons.append("stop-loss inequality violated")
    return MajorizationVerdict(not reasons, mass_res, moment_res, viol, taus, prof,
                               "; ".join(reasons))


# --------------------------------------------------------------------------
# the general sufficient condition on singleton and ray regions


@dataclass
class RegionReport:
    piece: int
    kind: str
    entries: int
    mass: float
    touch_point: Optional[np.ndarray]
    passed: bool
    worst_residual: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {"piece": self.piece, "kind": self.kind, "entries": self.entries,
                "mass": self.mass, "passed": self.passed,
                "touch_point": None if self.touch_point is None else self.touch_point.tolist(),
                "worst_residual": self.worst_residual, "reason": self.reason}


@dataclass
class CertificateReport:
    regions: list
    duality_gap: Optional[float] = None
    assumptions: tuple = ASSUMPTIONS
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.regions)

    @property
    def worst_residual(self) -> float:
        return max((r.worst_residual for r in self.regions), default=0.0)

    def failing(self):
        return [r for r in self.regions if not r.passed]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst_residual": self.worst_residual,
                "duality_gap": self.duality_gap, "assumptions": list(self.assumptions),
                "details": self.details, "regions": [r.to_dict() for r in self.regions]}


def _line_of(points, touch):
    """Origin and unit direction of the line through ``points``, or None if not collinear."""
    pts = points if touch is None else np.vstack([points, touch])
    centre = pts.mean(axis=0)
    X = pts - centre
    if pts.shape[1] == 1:
        return (touch if touch is not None else pts[0]), np.ones(1)
    _, sv, vt = np.linalg.svd(X, full_matrices=False)
    extent = max(float(sv[0]), 1e-300)
    if sv.size > 1 and sv[1] > COLLINEAR_TOL * max(1.0, extent):
        return None
    origin = touch if touch is not None else pts[0]
    return origin, vt[0]


def check_theorem1(problem: DelegationProblem, menu: Menu, measure: SignedMeasureGrid,
                   tol: float = CERT_TOL) -> CertificateReport:
    """Sufficient optimality condition for the indirect utility of ``menu``.

    Tolerances are relative to the total variation of ``measure``. Menus should
    place their kinks on measure nodes (see ``interval_menu_on_nodes``);
    otherwise pooling regions are split between nodes and the discrete
    barycenters no longer sit at the touch points.
    """
    verdict = check_feasible_menu(problem, menu)
    if not verdict.feasible:
        raise DomainError("menu is not feasible")
    part = extract_partition(problem, menu, measure)
    scale = max(measure.total_variation, np.finfo(float).tiny)
    reports = []
    for reg in part.regions:
        sub = measure.subset(reg.entries)
        pts, w = sub.aggregate()
        mass = math.fsum(w)
        if pts.shape[0] == 1:
            x = pts[0]
            hx = float(first_best_payoff(problem, x))
            Ux = float(reg.action @ x + reg.intercept)
            touches = abs(hx - Ux) <= TOUCH_TOL * (1.0 + abs(hx))
            ok_mass = mass >= -tol * scale
            ok = ok_mass and (abs(mass) <= tol * scale or touches)
            reason = "" if ok else ("negative mass" if not ok_mass else "positive mass without touch")
            worst = max(-mass, 0.0) if touches else abs(mass)
            reports.append(RegionReport(reg.piece, "singleton", len(reg.entries), mass,
                                        reg.touch_point, ok, worst, reason))
            continue
        line = _line_of(pts, reg.touch_point)
        if line is None:
            raise UnsupportedRegionError(
                f"region of piece {reg.piece} spans more than one dimension")
        origin, direction = line
        ray = Ray1DMeasure.from_points(pts, w, origin, direction)
        if reg.touch_point is None:
            dm, dz = 0.0, 0.0
        else:
            dm, dz = mass, float((reg.touch_point - origin) @ direction)
        mv = check_majorization_1d(ray, dm, dz, tol=tol, scale=scale)
        ok_mass = mass >= -tol * scale
        reason = mv.reason if ok_mass else "negative mass"
        reports.append(RegionReport(reg.piece, "ray", len(reg.entries), mass, reg.touch_point,
                                    ok_mass and mv.passed, max(mv.worst, -mass), reason))
    report = CertificateReport(reports)
    if report.passed:
        part.certified = True
        gamma = build_gamma_from_partition(part, measure)
        U = lambda x: menu_eval(menu, x)[0]
        report.duality_gap = duality_gap(problem, U, measure, gamma)
    report.details["partition"] = part
    return report


def build_gamma_from_partition(partition: PoolingPartition,
                               measure: Optional[SignedMeasureGrid] = None) -> SignedMeasureGrid:
    """Positive measure placing each certified region's mass at its touch point."""
    if not partition.certified:
        raise DomainError("partition has not passed the certificate check")
    measure = partition.measure if measure is None else measure
    nodes, weights = [], []
    for reg in partition.regions:
        if reg.touch_point is None:
            continue
        m = math.fsum(measure.weights[reg.entries])
        nodes.append(np.atleast_1d(reg.touch_point))
        weights.append(max(m, 0.0))
    if not nodes:
        return SignedMeasureGrid(np.zeros((1, measure.n)), np.zeros(1), False, 0.0)
    pts = np.stack(nodes)
    agg_pts, agg_w = SignedMeasureGrid(pts, np.array(weights), False, 0.0).aggregate()
    return SignedMeasureGrid(agg_pts, agg_w, False, 0.0)


# --------------------------------------------------------------------------
# interval delegation in one dimension


def _gauss(order: int = 64):
    return np.polynomial.legendre.leggauss(order)


def _interior(problem, x):
    """Clamp abscissae to the open interval so that nu can be evaluated there."""
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    eps = 1e-12 * (hi - lo)
    return np.clip(x, lo + eps, hi - eps)


def _boundary_atoms(problem):
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    return (float(nu_boundary(problem, lo, -1.0)), float(nu_boundary(problem, hi, 1.0)))


def _nu(problem, x):
    x = np.asarray(x, dtype=float)
    return np.asarray(nu_interior(problem, x[..., None]), dtype=float).reshape(x.shape)


def _integral(problem, lo, hi, weight_fn, order: int = 64):
    """Gauss-Legendre integral of ``weight_fn(x) * nu(x)`` on [lo, hi]."""
    if hi <= lo:
        return 0.0
    x, w = _gauss(order)
    xs = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    vals = _nu(problem, xs) * weight_fn(xs)
    return 0.5 * (hi - lo) * math.fsum(w * vals)


def _measure_scale(problem):
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    x = np.linspace(lo, hi, 2001)
    xm = 0.5 * (x[1:] + x[:-1])
    tv = math.fsum(np.abs(_nu(problem, xm)) * np.diff(x))
    a_lo, a_hi = _boundary_atoms(problem)
    return tv + abs(a_lo) + abs(a_hi)


def _tail_moments(problem, svals, upper: bool, order: int = 64) -> np.ndarray:
    """Vectorized tail moments for many cut points at once (boundary atom included)."""
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    s = np.atleast_1d(np.asarray(svals, dtype=float))
    x, w = _gauss(order)
    a, b = (s, np.full_like(s, hi)) if upper else (np.full_like(s, lo), s)
    half = 0.5 * (b - a)
    xs = half[:, None] * x + 0.5 * (a + b)[:, None]
    lever = (xs - s[:, None]) if upper else (s[:, None] - xs)
    vals = _nu(problem, _interior(problem, xs)) * lever
    inner = half * np.array([math.fsum(row) for row in vals * w])
    a_lo, a_hi = _boundary_atoms(problem)
    atom = (hi - s) * a_hi if upper else (s - lo) * a_lo
    return inner + atom


def upper_tail_residual(problem: DelegationProblem, s) -> np.ndarray:
    """``int_s^top (x - s) dmu(x)``, boundary atom at the top included."""
    out = _tail_moments(problem, s, True)
    return float(out[0]) if np.ndim(s) == 0 else out


def lower_tail_residual(problem: DelegationProblem, s) -> np.ndarray:
    """``int_bottom^s (s - x) dmu(x)``, boundary atom at the bottom included."""
    out = _tail_moments(problem, s, False)
    return float(out[0]) if np.ndim(s) == 0 else out


@dataclass
class IntervalReport:
    s1: float
    s2: float
    passed: bool
    min_nu: float
    max_upper_tail: float
    upper_equality: float
    max_lower_tail: float
    lower_equality: float
    scale: float
    tol: float
    failures: list = field(default_factory=list)

    @property
    def worst_residual(self) -> float:
        return max(-self.min_nu, self.max_upper_tail, abs(self.upper_equality),
                   self.max_lower_tail, abs(self.lower_equality), 0.0)

    def to_dict(self) -> dict:
        return {"s1": self.s1, "s2": self.s2, "passed": self.passed,
                "min_nu_on_interval": self.min_nu, "max_upper_tail": self.max_upper_tail,
                "upper_equality_residual": self.upper_equality,
                "max_lower_tail": self.max_lower_tail,
                "lower_equality_residual": self.lower_equality, "scale": self.scale,
                "tol": self.tol, "failures": list(self.failures)}


def check_interval_delegation(problem: DelegationProblem, s1: float, s2: float,
                              tol: float = INTERVAL_TOL, points: int = 401) -> IntervalReport:
    """Necessary and sufficient conditions for delegating to ``[s1, s2]`` to be optimal.

    (i) nu >= 0 on the interval; (ii) every upper tail beyond s2 has
    nonpositive (x - s)-moment, zero at s2; (iii) the mirrored statement below
    s1. Residuals are compared with ``tol`` times the total variation of mu.
    """
    if problem.n != 1:
        raise DomainError("interval delegation is one-dimensional")
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    s1, s2 = float(s1), float(s2)
    if not (lo <= s1 < s2 <= hi):
        raise DomainError(f"need {lo} <= s1 < s2 <= {hi}, got [{s1}, {s2}]")
    scale = _measure_scale(problem)
    thr = tol * scale
    failures = []

    xs = _interior(problem, np.linspace(s1, s2, points))
    min_nu = float(np.min(_nu(problem, xs)))
    a_lo, a_hi = _boundary_atoms(problem)
    if s1 == lo:
        min_nu = min(min_nu, a_lo)
    if s2 == hi:
        min_nu = min(min_nu, a_hi)
    if min_nu < -thr:
        failures.append("nu negative on the interval")

    up = upper_tail_residual(problem, np.linspace(s2, hi, points))
    upper_eq = float(up[0])
    max_up = float(np.max(up))
    if max_up > thr:
        failures.append("upper tail moment positive")
    if abs(upper_eq) > thr:
        failures.append("upper equality violated at s2")

    dn = lower_tail_residual(problem, np.linspace(lo, s1, points))
    lower_eq = float(dn[-1])
    max_dn = float(np.max(dn))
    if max_dn > thr:
        failures.append("lower tail moment positive")
    if abs(lower_eq) > thr:
        failures.append("lower equality violated at s1")

    return IntervalReport(s1, s2, not failures, min_nu, max_up, upper_eq, max_dn, lower_eq,
                          scale, tol, failures)


@dataclass
class IntervalResult:
    s1: float
    s2: float
    report: Optional[IntervalReport]
    pooled: bool = False
    diagnostic: str = ""

    def to_dict(self) -> dict:
        return {"s1": self.s1, "s2": self.s2, "pooled": self.pooled,
                "diagnostic": self.diagnostic,
                "report": None if self.report is None else self.report.to_dict()}


def _contiguous(mask) -> bool:
    idx = np.flatnonzero(mask)
    return idx.size > 0 and idx[-1] - idx[0] + 1 == idx.size


def _sign_change(fn, xs, vals, thr, from_right: bool):
    """Root of a residual whose sign is positive before the root and nonpositive after."""
    pos = np.flatnonzero(vals > thr)
    if from_right:
        if pos.size == 0:
            return None
        j = int(pos[-1])
        if np.any(vals[:j] < -thr):
            raise PreconditionError("upper residual changes sign more than once")
        if j == len(xs) - 1:
            return xs[-1]
        return optimize.brentq(fn, xs[j], xs[j + 1], xtol=1e-14, rtol=1e-15)
    if pos.size == 0:
        return None
    j = int(pos[0])
    if np.any(vals[j:] < -thr):
        raise PreconditionError("lower residual changes sign more than once")
    if j == 0:
        return xs[0]
    return optimize.brentq(fn, xs[j - 1], xs[j], xtol=1e-14, rtol=1e-15)


def find_optimal_interval(problem: DelegationProblem, points: int = 2001,
                          tol: float = INTERVAL_TOL) -> IntervalResult:
    """Locate the optimal delegation interval from the two tail equalities.

    The upper endpoint is the root of ``upper_tail_residual(s) / (top - s)``
    and the lower endpoint the root of the mirrored quantity; each is found by
    scanning for the sign change and refining with a bracketed root finder.
    When the roots cross, every type is pooled at the barycenter of mu.
    """
    if problem.n != 1:
        raise PreconditionError("interval search is one-dimensional")
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    scale = _measure_scale(problem)
    thr = tol * scale
    grid = np.linspace(lo, hi, points)
    nu = _nu(problem, _interior(problem, grid))
    if not _contiguous(nu >= -thr):
        raise PreconditionError("the set where nu >= 0 is not an interval")
    a_lo, a_hi = _boundary_atoms(problem)

    def upper(s):
        return a_hi if s >= hi else upper_tail_residual(problem, s) / (hi - s)

    def lower(s):
        return a_lo if s <= lo else lower_tail_residual(problem, s) / (s - lo)

    with np.errstate(divide="ignore", invalid="ignore"):
        up_vals = upper_tail_residual(problem, grid) / (hi - grid)
        dn_vals = lower_tail_residual(problem, grid) / (grid - lo)
    up_vals[-1], dn_vals[0] = a_hi, a_lo

    if a_hi >= -thr:
        s2 = hi
    else:
        s2 = _sign_change(upper, grid, up_vals, thr, from_right=True)
    if a_lo >= -thr:
        s1 = lo
    else:
        s1 = _sign_change(lower, grid, dn_vals, thr, from_right=False)

    if s1 is None or s2 is None or s1 >= s2:
        mass = integrate_nu(problem, lambda x: np.ones_like(x))
        first = integrate_nu(problem, lambda x: x)
        z = first / mass
        return IntervalResult(z, z, None, True,
                              f"tail conditions cross: all types pooled at {z:.17g}")
    report = check_interval_delegation(problem, s1, s2, tol=tol)
    return IntervalResult(float(s1), float(s2), report)


def integrate_nu(problem: DelegationProblem, fn) -> float:
    """``int fn dmu`` in one dimension (interior density plus both boundary atoms)."""
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    a_lo, a_hi = _boundary_atoms(problem)
    return (_integral(problem, lo, hi, fn, order=128) + a_lo * float(fn(np.array(lo)))
            + a_hi * float(fn(np.array(hi))))


def interval_indirect_utility(problem: DelegationProblem, s1: float, s2: float):
    """U of delegating to [s1, s2] as a callable on plain abscissae (1D, any curvature)."""
    curv = problem.curvature

    def U(x):
        x = np.asarray(x, dtype=float)
        a = np.clip(curv.first_best_action(x[..., None])[..., 0], s1, s2)
        return a * x + curv.b(a[..., None])

    return U


def interval_value(problem: DelegationProblem, s1: float, s2: float) -> float:
    """``int U dmu`` for delegation to [s1, s2], integrated piecewise between kinks."""
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    curv = problem.curvature
    kinks = [float(curv.touch_point(np.array([v]))[0]) for v in (s1, s2)]
    cuts = sorted({lo, hi, *[k for k in kinks if lo < k < hi]})
    U = interval_indirect_utility(problem, s1, s2)
    total = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        total.append(_integral(problem, a, b, lambda x: U(x), order=64))
    a_lo, a_hi = _boundary_atoms(problem)
    total.append(a_lo * float(U(np.array(lo))))
    total.append(a_hi * float(U(np.array(hi))))
    return math.fsum(total)


# --------------------------------------------------------------------------
# constant bias with a logconcave density


@dataclass
class LogconcaveVerdict:
    hypothesis_holds: bool
    reason: str
    result: Optional[IntervalResult] = None
    max_log_second_difference: float = float("nan")

    def to_dict(self) -> dict:
        return {"hypothesis_holds": self.hypothesis_holds, "reason": self.reason,
                "max_log_second_difference": self.max_log_second_difference,
                "result": None if self.result is None else self.result.to_dict()}


def check_logconcave_bias(problem: DelegationProblem, points: int = 2001,
                          tol: float = 1e-10) -> LogconcaveVerdict:
    """Interval delegation under a constant bias and a logconcave density.

    Verifies the hypotheses on a grid (concavity of log f; nu crossing zero
    once, from below for an upward bias and from above for a downward one)
    and, when they hold, locates the interval.
    """
    if problem.n != 1:
        raise PreconditionError("constant-bias test is one-dimensional")
    if abs(problem.kappa - 1.0) > 1e-12:
        raise PreconditionError("constant-bias test needs kappa = 1")
    if not isinstance(problem.bias, AffineBias):
        raise PreconditionError("constant-bias test needs g(s) = s + beta")
    beta = problem.bias.beta[0]
    lo, hi = problem.state_space.lo[0], problem.state_space.hi[0]
    x = _interior(problem, np.linspace(lo, hi, points))
    f = np.asarray(problem.f(x[:, None]), dtype=float)
    if np.any(f <= 0):
        return LogconcaveVerdict(False, "density vanishes on the state space")
    logf = np.log(f)
    d2 = logf[2:] - 2 * logf[1:-1] + logf[:-2]
    worst = float(np.max(d2))
    if worst > tol * max(1.0, float(np.max(np.abs(logf)))):
        return LogconcaveVerdict(False, "log f is not concave on the grid", None, worst)
    nu = _nu(problem, x)
    scale = _measure_scale(problem)
    sign = np.where(nu > 1e-12 * scale, 1, np.where(nu < -1e-12 * scale, -1, 0))
    sign = sign[sign != 0]
    steps = np.diff(sign)
    a_lo, a_hi = _boundary_atoms(problem)
    if beta >= 0:
        if np.any(steps < 0) or a_lo > 1e-12 * scale:
            return LogconcaveVerdict(False, "nu does not cross zero once from below", None, worst)
    else:
        if np.any(steps > 0) or a_hi > 1e-12 * scale:
            return LogconcaveVerdict(False, "nu does not cross zero once from above", None, worst)
    return LogconcaveVerdict(True, "log f concave and nu single crossing",
                             find_optimal_interval(problem, points), worst)


# --------------------------------------------------------------------------
# convex delegation sets in two dimensions


@dataclass
class ConvexDelegationReport:
    passed: bool
    min_nu: float
    max_equality_residual: float
    max_tail_violation: float
    residuals: np.ndarray
    tol: float
    failures: list = field(default_factory=list)
    assumptions: tuple = ASSUMPTIONS

    def to_dict(self) -> dict:
        return {"passed": self.passed, "min_nu_in_set": self.min_nu,
                "max_equality_residual": self.max_equality_residual,
                "max_tail_violation": self.max_tail_violation, "tol": self.tol,
                "failures": list(self.failures), "assumptions": list(self.assumptions),
                "vertex_residuals": self.residuals.tolist()}


def check_convex_delegation(problem: DelegationProblem, boundary, tol: float = 5e-3,
                            z_points: int = 16, grid: int = 17) -> ConvexDelegationReport:
    """Optimality of delegating to a convex polygon A (two dimensions, quadratic b).

    (i) nu >= 0 at the ``grid``-squared nodes of S lying in A; (ii) on the ray
    through every vertex the sector measure has zero first moment about the
    vertex and nonpositive stop-loss moments beyond it. Ray quantities are
    normalized by the sector's absolute first moment. ``boundary=None`` means
    A = S, in which case every ray is empty.
    """
    from .boundary2d import RayDisintegration, normalized_residuals
    from .geometry import BoundaryCurve

    if problem.n != 2:
        raise PreconditionError("convex delegation check is two-dimensional")
    if not problem.curvature.quadratic:
        raise PreconditionError("convex delegation check needs quadratic curvature")
    box = problem.state_space
    axes = [np.linspace(lo, hi, grid)[1:-1] for lo, hi in zip(box.lo, box.hi)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    if boundary is None:
        inside = nodes
        curve = None
    else:
        curve = boundary if isinstance(boundary, BoundaryCurve) else BoundaryCurve(boundary)
        if not curve.inside_box(box):
            raise DomainError("delegation set must lie strictly inside the state space")
        proj = curve.project(nodes)
        inside = nodes[np.all(proj == nodes, axis=1)]
        c = curve.vertices.mean(axis=0)
        inside = np.vstack([inside, c + (1 - 1e-9) * (curve.vertices - c)])
    nu = np.asarray(nu_interior(problem, inside), dtype=float)
    scale = max(float(np.max(np.abs(nu))), np.finfo(float).tiny)
    min_nu = float(np.min(nu))
    failures = []
    if min_nu < -tol * scale:
        failures.append("nu negative inside the delegation set")
    if curve is None:
        return ConvexDelegationReport(not failures, min_nu, 0.0, 0.0, np.zeros(0), tol, failures)

    dis = RayDisintegration(problem)
    V = curve.vertices
    normals = curve.normals()
    res = normalized_residuals(dis, V, normals)
    max_eq = float(np.max(np.abs(res)))
    if max_eq > tol:
        failures.append("ray first moments not zero")
    max_tail = 0.0
    for k in range(V.shape[0]):
        _, absm, _ = dis.moments(V, k, normals[k])
        if absm <= 0:
            continue
        reach = dis.reach_along(V, k, normals[k])
        for z in np.linspace(0.0, reach, z_points)[1:]:
            max_tail = max(max_tail, dis.stop_loss(V, k, normals[k], z) / absm)
    if max_tail > tol:
        failures.append("ray stop-loss moments positive")
    return ConvexDelegationReport(not failures, min_nu, max_eq, max_tail, res, tol, failures)


def binned_ray_moments(problem: DelegationProblem, curve, nodes_per_axis: int = 17,
                       groups: int = 8) -> np.ndarray:
    """Cross-check of the ray condition by node binning on a coarse grid.

    Nodes of the discretized mu outside A are attached to their nearest point
    of A; the distance-weighted mass (first moment along the ray) is summed
    within ``groups`` equal angular sectors of boundary points and normalized
    by the corresponding absolute moment. Each group sum should be near zero
    when the per-ray condition holds, up to the coarse-grid error.
    """
    mu = discretize_measure(problem, nodes_per_axis)
    proj = curve.project(mu.nodes)
    dist = np.linalg.norm(mu.nodes - proj, axis=1)
    outside = dist > 1e-12
    c = curve.vertices.mean(axis=0)
    ang = np.mod(np.arctan2(proj[:, 1] - c[1], proj[:, 0] - c[0]), 2 * np.pi)
    g = np.minimum((ang / (2 * np.pi) * groups).astype(int), groups - 1)
    out = np.zeros(groups)
    for j in range(groups):
        sel = outside & (g == j)
        num = math.fsum(mu.weights[sel] * dist[sel])
        den = math.fsum(np.abs(mu.weights[sel]) * dist[sel])
        out[j] = num / den if den > 0 else 0.0
    return out
