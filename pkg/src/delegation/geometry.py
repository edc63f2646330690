"""Planar geometry for convex delegation sets: polygons, clipping, moments, projection.

Small polygons are plain lists of ``(x, y)`` tuples; batch operations take
numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstructionError, DomainError

MIN_VERTICES = 16

# symmetric 7-point rule on the reference triangle, exact for degree 5
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
TRI_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
TRI_W = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def signed_area(poly) -> float:
    s = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def polygon_moments(poly):
    """Area and first moments ``(A, int x, int y)`` of a simple polygon (CCW positive)."""
    a = mx = my = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + poly[:1]):
        cr = x0 * y1 - x1 * y0
        a += cr
        mx += (x0 + x1) * cr
        my += (y0 + y1) * cr
    return 0.5 * a, mx / 6.0, my / 6.0


def clip_halfplane(poly, nx: float, ny: float, c: float):
    """Part of ``poly`` where ``nx*x + ny*y >= c`` (one Sutherland-Hodgman pass)."""
    out = []
    if not poly:
        return out
    prev = poly[-1]
    fp = nx * prev[0] + ny * prev[1] - c
    for cur in poly:
        fc = nx * cur[0] + ny * cur[1] - c
        if fc >= 0:
            if fp < 0:
                t = fp / (fp - fc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            out.append(cur)
        elif fp >= 0:
            t = fp / (fp - fc)
            out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
        prev, fp = cur, fc
    return out


def clip_to_box(poly, lo, hi):
    for axis in range(2):
        n = (1.0, 0.0) if axis == 0 else (0.0, 1.0)
        poly = clip_halfplane(poly, n[0], n[1], lo[axis])
        poly = clip_halfplane(poly, -n[0], -n[1], -hi[axis])
        if not poly:
            break
    return poly


def clip_segment(p0, p1, convex_ccw):
    """Parameter range ``(t0, t1)`` of ``p0 + t (p1 - p0)`` inside a convex CCW polygon."""
    t0, t1 = 0.0, 1.0
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    for (ax, ay), (bx, by) in zip(convex_ccw, convex_ccw[1:] + convex_ccw[:1]):
        # inside: left of edge a->b, i.e. cross(b - a, q - a) >= 0
        ex, ey = bx - ax, by - ay
        num = ex * (p0[1] - ay) - ey * (p0[0] - ax)
        den = ex * dy - ey * dx
        if den == 0.0:
            if num < 0:
                return None
            continue
        t = -num / den
        if den > 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 >= t1:
            return None
    return t0, t1


def triangle_fan_points(poly):
    """Quadrature points and weights covering a convex polygon (degree-5 exact)."""
    if len(poly) < 3:
        return np.zeros((0, 2)), np.zeros(0)
    P = np.asarray(poly, dtype=float)
    tris = np.stack([np.broadcast_to(P[0], P[1:-1].shape), P[1:-1], P[2:]], axis=1)
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = np.einsum("qk,tkd->tqd", TRI_BARY, tris).reshape(-1, 2)
    wts = (area[:, None] * TRI_W[None, :]).ravel()
    return pts, wts


def project_onto_polygon(points, vertices) -> np.ndarray:
    """Nearest point of a convex CCW polygon (interior included) for each point."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    V = np.asarray(vertices, dtype=float)
    W = np.roll(V, -1, axis=0)
    E = W - V
    # inside test: left of every edge
    cross = E[None, :, 0] * (X[:, None, 1] - V[None, :, 1]) - E[None, :, 1] * (X[:, None, 0] - V[None, :, 0])
    inside = np.all(cross >= 0, axis=1)
    out = X.copy()
    if np.all(inside):
        return out
    Y = X[~inside]
    best = np.full(Y.shape[0], np.inf)
    proj = np.empty_like(Y)
    for v, e in zip(V, E):
        t = np.clip(((Y - v) @ e) / (e @ e), 0.0, 1.0)
        q = v + t[:, None] * e
        d = np.sum((Y - q) ** 2, axis=1)
        better = d < best
        best[better] = d[better]
        proj[better] = q[better]
    out[~inside] = proj
    return out


@dataclass
class BoundaryCurve:
    """Closed strictly convex polygon with CCW vertices and smoothed outward normals.

    The normal at a vertex bisects the outward normals of its two edges.
    """

    vertices: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2:
            raise ConstructionError("boundary vertices must have shape (m, 2)")
        if V.shape[0] < MIN_VERTICES:
            raise ConstructionError(f"boundary needs at least {MIN_VERTICES} vertices")
        if signed_area([tuple(v) for v in V]) < 0:
            V = V[::-1].copy()
        self.vertices = V
        if not self.is_strictly_convex():
            raise DomainError("boundary polygon is not strictly convex")

    @classmethod
    def circle(cls, radius: float, count: int = 64, center=(0.0, 0.0)) -> "BoundaryCurve":
        ang = 2 * np.pi * np.arange(count) / count
        return cls(np.column_stack([center[0] + radius * np.cos(ang),
                                    center[1] + radius * np.sin(ang)]))

    def __len__(self):
        return self.vertices.shape[0]

    def cross_products(self) -> np.ndarray:
        V = self.vertices
        a = np.roll(V, 1, axis=0)
        c = np.roll(V, -1, axis=0)
        e1 = V - a
        e2 = c - V
        return e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]

    def is_strictly_convex(self) -> bool:
        V = self.vertices
        scale = float(np.max(np.sum((np.roll(V, -1, axis=0) - V) ** 2, axis=1)))
        if not np.all(self.cross_products() > 1e-14 * scale):
            return False
        # a closed polygon with left turns everywhere is convex iff it winds once
        d = np.roll(V, -1, axis=0) - V
        ang = np.arctan2(d[:, 1], d[:, 0])
        turn = np.mod(np.diff(np.append(ang, ang[0])), 2 * np.pi)
        return abs(float(np.sum(turn)) - 2 * np.pi) < 1e-6

    def edge_normals(self) -> np.ndarray:
        """Outward unit normal of edge k (from vertex k to vertex k+1)."""
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def normals(self) -> np.ndarray:
        ne = self.edge_normals()
        n = ne + np.roll(ne, 1, axis=0)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def area(self) -> float:
        return signed_area([tuple(v) for v in self.vertices])

    def inside_box(self, box, margin: float = 0.0) -> bool:
        V = self.vertices
        return bool(np.all(V > box.lo_arr + margin) and np.all(V < box.hi_arr - margin))

    def project(self, points) -> np.ndarray:
        return project_onto_polygon(points, self.vertices)

    def table(self):
        header = ["x", "y", "normal_x", "normal_y"]
        rows = [[*v.tolist(), *n.tolist()] for v, n in zip(self.vertices, self.normals())]
        return header, rows


def square_symmetries():
    """The eight linear maps of the symmetry group of a centered square."""
    mats = []
    for swap in (False, True):
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                M = np.diag([sx, sy])
                if swap:
                    M = M @ np.array([[0.0, 1.0], [1.0, 0.0]])
                mats.append(M)
    return mats


def symmetry_residual(curve: BoundaryCurve, center=(0.0, 0.0)) -> float:
    """Largest distance from a transformed vertex to the nearest original vertex."""
    V = curve.vertices - np.asarray(center)
    worst = 0.0
    for M in square_symmetries():
        W = V @ M.T
        d = np.sqrt(np.min(np.sum((W[:, None, :] - V[None, :, :]) ** 2, axis=2), axis=1))
        worst = max(worst, float(np.max(d)))
    return worst

