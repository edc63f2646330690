"""The signed measure mu that the principal's objective integrates U against.

mu has density ``nu`` on the interior of S,

    nu(s) = kappa f(s) - div[(g(s) - kappa s) f(s)],

and surface density ``[g(s) - kappa s] f(s) . n_S(s)`` on the boundary, so that
the expected principal payoff of any feasible indirect utility U equals the
integral of U against mu.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConstructionError, DomainError
from .model import DelegationProblem, as_points

NORMAL_TOL = 1e-9


def nu_interior(problem: DelegationProblem, s) -> np.ndarray:
    """Interior density of mu at points strictly inside S."""
    s = as_points(s, problem.n)
    if not np.all(problem.state_space.is_interior(s)):
        raise DomainError("nu_interior needs points strictly inside the state space")
    k = problem.kappa
    f = problem.density.pdf(s)
    df = problem.density.grad(s)
    drift = problem.bias.g(s) - k * s
    div_drift = problem.bias.divergence(s) - k * problem.n
    val = k * f - div_drift * f - np.sum(drift * df, axis=-1)
    return val if val.ndim else float(val)


def _on_boundary(box, s, tol=1e-9):
    lo, hi = box.lo_arr, box.hi_arr
    near = np.isclose(s, lo, atol=tol, rtol=0) | np.isclose(s, hi, atol=tol, rtol=0)
    return box.contains(s, tol) & np.any(near, axis=-1)


def nu_boundary(problem: DelegationProblem, s, normal) -> np.ndarray:
    """Surface density ``[g(s) - kappa s] f(s) . normal`` at boundary points."""
    s = as_points(s, problem.n)
    normal = as_points(normal, problem.n)
    if np.any(np.abs(np.linalg.norm(normal, axis=-1) - 1.0) > NORMAL_TOL):
        raise DomainError("boundary normal must have unit length")
    if not np.all(_on_boundary(problem.state_space, s)):
        raise DomainError("nu_boundary needs points on the boundary of the state space")
    drift = problem.bias.g(s) - problem.kappa * s
    val = np.sum(drift * normal, axis=-1) * problem.density.pdf(s)
    return val if val.ndim else float(val)


@dataclass
class SignedMeasureGrid:
    """Finitely supported signed measure.

    Entries may share coordinates (a boundary node carries both its interior
    cell weight and one surface atom per adjacent face).
    """

    nodes: np.ndarray
    weights: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    nu_values: Optional[np.ndarray] = None
    axes: Optional[Sequence[np.ndarray]] = None
    total_mass: float = field(init=False)
    barycenter: np.ndarray = field(init=False)

    def __post_init__(self):
        self.nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        m = self.nodes.shape[0]
        self.boundary = np.broadcast_to(np.asarray(self.boundary, dtype=bool), (m,)).copy()
        self.normals = np.broadcast_to(np.asarray(self.normals, dtype=float), self.nodes.shape).copy()
        if self.weights.shape[0] != m:
            raise ConstructionError("one weight per node required")
        if not np.all(np.isfinite(self.weights)):
            raise ConstructionError("measure weights must be finite")
        self.total_mass = math.fsum(self.weights)
        if self.total_mass != 0.0:
            moments = [math.fsum(self.weights * self.nodes[:, i]) for i in range(self.n)]
            self.barycenter = np.array(moments) / self.total_mass
        else:
            self.barycenter = np.full(self.n, np.nan)

    @classmethod
    def atoms(cls, nodes, weights) -> "SignedMeasureGrid":
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        if nodes.shape[0] == 1 and len(np.atleast_1d(weights)) > 1:
            nodes = nodes.T
        return cls(nodes, weights, False, 0.0)

    @property
    def n(self) -> int:
        return self.nodes.shape[1]

    def __len__(self):
        return self.weights.shape[0]

    @property
    def total_variation(self) -> float:
        return math.fsum(np.abs(self.weights))

    def first_moment(self) -> np.ndarray:
        return np.array([math.fsum(self.weights * self.nodes[:, i]) for i in range(self.n)])

    def integrate_fn(self, fn) -> float:
        return integrate(self, np.asarray(fn(self.nodes), dtype=float))

    def aggregate(self, decimals: int = 12):
        """Unique support points with summed weights (sorted lexicographically)."""
        key = np.round(self.nodes, decimals) + 0.0
        _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        inv = inv.ravel()
        order = np.argsort(inv, kind="stable")
        cuts = np.flatnonzero(np.diff(inv[order])) + 1
        w = np.array([math.fsum(chunk) for chunk in np.split(self.weights[order], cuts)])
        return self.nodes[first], w

    def subset(self, mask) -> "SignedMeasureGrid":
        mask = np.asarray(mask)
        nu = None if self.nu_values is None else self.nu_values[mask]
        return SignedMeasureGrid(self.nodes[mask], self.weights[mask], self.boundary[mask],
                                 self.normals[mask], nu, self.axes)

    def scaled(self, c: float) -> "SignedMeasureGrid":
        nu = None if self.nu_values is None else c * self.nu_values
        return SignedMeasureGrid(self.nodes, c * self.weights, self.boundary, self.normals,
                                 nu, self.axes)

    def table(self):
        """Rows (coords..., tag, nu, weight) for CSV export."""
        nu = self.nu_values if self.nu_values is not None else np.full(len(self), np.nan)
        rows = []
        for p, b, v, w in zip(self.nodes, self.boundary, nu, self.weights):
            rows.append([*p.tolist(), "boundary" if b else "interior", float(v), float(w)])
        header = [f"s{i + 1}" for i in range(self.n)] + ["tag", "nu", "weight"]
        return header, rows


@dataclass(frozen=True)
class GridSpec:
    """Nodes per axis of a tensor grid that includes every corner of the box."""

    nodes_per_axis: tuple

    def __post_init__(self):
        object.__setattr__(self, "nodes_per_axis",
                           tuple(int(k) for k in np.atleast_1d(self.nodes_per_axis)))

    @classmethod
    def uniform(cls, k: int, n: int) -> "GridSpec":
        return cls((k,) * n)

    def axes(self, box) -> list:
        if len(self.nodes_per_axis) == 1 and box.n > 1:
            counts = self.nodes_per_axis * box.n
        else:
            counts = self.nodes_per_axis
        if len(counts) != box.n:
            raise ConstructionError("grid spec dimension does not match the state space")
        if any(k < 3 for k in counts):
            raise ConstructionError("grid needs at least 3 nodes per axis")
        return [np.linspace(lo, hi, k) for lo, hi, k in zip(box.lo, box.hi, counts)]


def _cells(axis: np.ndarray):
    """Dual cells of an axis grid clipped to its end points: (midpoint, width)."""
    d = np.diff(axis)
    left = np.concatenate([[axis[0]], axis[:-1] + 0.5 * d])
    right = np.concatenate([axis[1:] - 0.5 * d, [axis[-1]]])
    return 0.5 * (left + right), right - left


def discretize_measure(problem: DelegationProblem, grid_spec) -> SignedMeasureGrid:
    """Discretize mu on a tensor grid conforming to the box.

    Each grid node receives ``nu(cell center) * cell volume`` for its dual cell
    (midpoint rule, so nu is only evaluated strictly inside S), and each node on
    a face receives ``nu_boundary * face cell area`` per adjacent face.
    """
    if isinstance(grid_spec, int):
        grid_spec = GridSpec.uniform(grid_spec, problem.n)
    box = problem.state_space
    axes = grid_spec.axes(box)
    n = problem.n
    centers, widths = zip(*(_cells(ax) for ax in axes))

    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    cmesh = np.stack(np.meshgrid(*centers, indexing="ij"), axis=-1).reshape(-1, n)
    vol = np.prod(np.stack(np.meshgrid(*widths, indexing="ij"), axis=-1), axis=-1).ravel()
    nu_in = np.asarray(nu_interior(problem, cmesh), dtype=float).reshape(-1)

    nodes = [mesh]
    weights = [nu_in * vol]
    nus = [nu_in]
    bnd = [np.zeros(len(mesh), dtype=bool)]
    normals = [np.zeros_like(mesh)]

    for i in range(n):
        others = [j for j in range(n) if j != i]
        for side, val in ((-1.0, axes[i][0]), (1.0, axes[i][-1])):
            face_axes = [axes[j] if j != i else np.array([val]) for j in range(n)]
            pts = np.stack(np.meshgrid(*face_axes, indexing="ij"), axis=-1).reshape(-1, n)
            if others:
                area = np.prod(np.stack(np.meshgrid(*[widths[j] for j in others],
                                                    indexing="ij"), axis=-1), axis=-1).ravel()
            else:
                area = np.ones(1)
            normal = np.zeros(n)
            normal[i] = side
            nb = np.asarray(nu_boundary(problem, pts, np.broadcast_to(normal, pts.shape)),
                            dtype=float).reshape(-1)
            nodes.append(pts)
            weights.append(nb * area)
            nus.append(nb)
            bnd.append(np.ones(len(pts), dtype=bool))
            normals.append(np.broadcast_to(normal, pts.shape))

    return SignedMeasureGrid(np.concatenate(nodes), np.concatenate(weights),
                             np.concatenate(bnd), np.concatenate(normals),
                             np.concatenate(nus), axes)


def integrate(measure: SignedMeasureGrid, values) -> float:
    """Sum of weight_i * value_i with compensated summation."""
    values = np.asarray(values, dtype=float).ravel()
    if values.shape[0] != len(measure):
        raise DomainError(f"{values.shape[0]} values for a measure with {len(measure)} nodes")
    return math.fsum(measure.weights * values)
