"""Directional thresholds, the sets C_x / C_E, support hulls and witness simplices.

For a unit direction u the threshold of a point x is the first b >= <u, x> at
which the stop-loss transforms of the projected measures agree. The set C_x
is the intersection of the half-spaces <u, y> <= threshold over all u.

In the plane the intersection is computed exactly from a finite direction
set. Between two consecutive critical angles (normals of pairwise differences
of the relevant points) the projection order does not change, psi = phi_nu -
phi_mu is nonnegative and piecewise linear, and its first zero sits at the
projection of one fixed point; the half-spaces over such an arc are therefore
implied by those at its two end angles. In higher dimension a quasi-uniform
direction set gives an outer approximation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, EmptySubset, NotOrderedOnLine, NoWitness
from .lp_core import LinearProgram, Status, solve
from .measures import DiscreteMeasure, check_direction, union_support

DEFAULT_SPHERE_DIRECTIONS = 2048
VERTEX_TOL = 1e-9
MEMBERSHIP_TOL = 1e-6


@dataclass(frozen=True)
class HalfSpace:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise ValueError("half-space normal must be a unit vector")


@dataclass
class Polytope:
    """Intersection of half-spaces ``normals @ y <= offsets``.

    ``vertices`` is filled in dimension 1 and 2 (counterclockwise in 2-D);
    ``exact`` records whether the half-space list is known to describe the
    set exactly or only an outer approximation.
    """

    normals: np.ndarray
    offsets: np.ndarray
    vertices: np.ndarray | None = None
    exact: bool = True

    @property
    def dimension(self):
        return self.normals.shape[1]

    @property
    def halfspaces(self):
        return [HalfSpace(n, float(a)) for n, a in zip(self.normals, self.offsets)]

    def to_dict(self):
        out = {
            "halfspaces": [{"normal": [float(c) for c in n], "offset": float(a)}
                           for n, a in zip(self.normals, self.offsets)],
            "vertices": [] if self.vertices is None else [[float(c) for c in v] for v in self.vertices],
            "exact": self.exact,
        }
        return out

    @classmethod
    def from_dict(cls, data):
        hs = data["halfspaces"]
        normals = np.array([h["normal"] for h in hs], dtype=float)
        offsets = np.array([h["offset"] for h in hs], dtype=float)
        verts = data.get("vertices")
        verts = np.array(verts, dtype=float) if verts else None
        return cls(normals, offsets, verts, bool(data.get("exact", True)))


@dataclass
class WitnessSimplex:
    x: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    cx_set: Polytope | None = field(default=None, repr=False)

    @property
    def k(self):
        return len(self.weights)

    def to_dict(self):
        return {
            "x": [float(c) for c in self.x],
            "points": [[float(c) for c in p] for p in self.points],
            "weights": [float(w) for w in self.weights],
        }


# -- direction sets --------------------------------------------------------------

def _angles_to_dirs(theta):
    return np.column_stack([np.cos(theta), np.sin(theta)])


def critical_directions(points, extra_uniform=0):
    """Planar direction set: normals of all pairwise differences, the axes and
    the angular midpoints between consecutive critical angles."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    angles = [0.0, 0.5 * np.pi, np.pi, 1.5 * np.pi]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            w = pts[j] - pts[i]
            if np.max(np.abs(w)) <= 1e-14:
                continue
            t = np.arctan2(w[1], w[0])
            angles.extend([t + 0.5 * np.pi, t - 0.5 * np.pi])
    angles = np.mod(np.array(angles), 2 * np.pi)
    angles = np.sort(angles)
    keep = [angles[0]]
    for a in angles[1:]:
        if a - keep[-1] > 1e-13:
            keep.append(a)
    if 2 * np.pi - keep[-1] + keep[0] <= 1e-13 and len(keep) > 1:
        keep.pop()
    crit = np.array(keep)
    nxt = np.roll(crit, -1)
    nxt[-1] += 2 * np.pi
    mids = 0.5 * (crit + nxt)
    all_angles = np.concatenate([crit, mids])
    if extra_uniform:
        all_angles = np.concatenate([all_angles, np.linspace(0, 2 * np.pi, int(extra_uniform), endpoint=False)])
    return _angles_to_dirs(np.sort(np.mod(all_angles, 2 * np.pi)))


def sphere_directions(d, n):
    """Quasi-uniform unit vectors: Fibonacci lattice for d = 3, seeded Gaussian
    directions otherwise; the signed coordinate axes are always included."""
    axes = np.vstack([np.eye(d), -np.eye(d)])
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 3:
        i = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * i / n)
        theta = np.pi * (1 + 5 ** 0.5) * i
        pts = np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])
    else:
        rng = np.random.default_rng(20240531 + d)
        pts = rng.normal(size=(n, d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return np.vstack([axes, pts])


def direction_set(points, d, n_directions=None):
    """Directions used for C_x computations; returns (directions, exact)."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), True
    if d == 2:
        return critical_directions(points, n_directions or 0), True
    return sphere_directions(d, n_directions or DEFAULT_SPHERE_DIRECTIONS), False


# -- thresholds --------------------------------------------------------------------

def _psi_tol(mu, nu):
    pts = np.vstack([mu.points, nu.points])
    spread = float(np.max(np.abs(pts), initial=0.0))
    mass = float(np.sum(mu.masses) + np.sum(nu.masses))
    return 1e-10 * (1.0 + mass) * (1.0 + spread)


def thresholds(mu: DiscreteMeasure, nu: DiscreteMeasure, x, directions):
    """Vectorized threshold computation over the rows of ``directions``."""
    if mu.dimension != nu.dimension:
        raise DimensionMismatch("mu and nu have different dimensions")
    U = np.ascontiguousarray(directions, dtype=float).reshape(-1, mu.dimension)
    x = np.asarray(x, dtype=float).reshape(mu.dimension)
    base = U @ x
    proj_mu = np.ascontiguousarray(U @ mu.points.T)
    proj_nu = np.ascontiguousarray(U @ nu.points.T)
    tol = _psi_tol(mu, nu)
    out, lowest = _kernels.thresholds(proj_mu, np.ascontiguousarray(mu.masses), proj_nu,
                                      np.ascontiguousarray(nu.masses), base, tol)
    bad = lowest < -tol
    if np.any(bad):
        r = int(np.argmax(bad))
        raise NotOrderedOnLine(
            f"stop-loss transforms cross along direction {U[r]} (psi = {lowest[r]:.3g})")
    return out


def threshold(mu: DiscreteMeasure, nu: DiscreteMeasure, x, u) -> float:
    u = check_direction(u, mu.dimension)
    return float(thresholds(mu, nu, x, u[None, :])[0])


def support_offsets(nu: DiscreteMeasure, directions):
    """max_{y in Supp(nu)} <u, y> for each direction u."""
    return np.max(np.asarray(directions) @ nu.points.T, axis=1)


# -- polytope assembly ----------------------------------------------------------------

def _hull_2d(points):
    """Andrew's monotone chain; returns CCW vertices without collinear points."""
    pts = np.unique(np.round(np.asarray(points, dtype=float), 12), axis=0)
    if len(pts) <= 2:
        if len(pts) == 2 and np.max(np.abs(pts[0] - pts[1])) <= VERTEX_TOL:
            return pts[:1]
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-12:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-12:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    keep = [hull[0]]
    for p in hull[1:]:
        if np.max(np.abs(p - keep[-1])) > VERTEX_TOL:
            keep.append(p)
    if len(keep) > 1 and np.max(np.abs(keep[0] - keep[-1])) <= VERTEX_TOL:
        keep.pop()
    return np.array(keep)


def _clip_2d(normals, offsets, box):
    poly = [np.array([-box, -box]), np.array([box, -box]), np.array([box, box]), np.array([-box, box])]
    for n, a in zip(normals, offsets):
        if not poly:
            break
        tol = 1e-12 * (1.0 + abs(a))
        out = []
        k = len(poly)
        for i in range(k):
            p, q = poly[i], poly[(i + 1) % k]
            sp, sq = n @ p - a, n @ q - a
            if sp <= tol:
                out.append(p)
            if (sp < -tol and sq > tol) or (sp > tol and sq < -tol):
                t = sp / (sp - sq)
                out.append(p + t * (q - p))
        poly = out
    return poly


def polytope_from_halfspaces(normals, offsets, exact=True, scale=1.0):
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    d = normals.shape[1]
    vertices = None
    if d == 1:
        up = offsets[normals[:, 0] > 0] / normals[normals[:, 0] > 0, 0]
        lo = -offsets[normals[:, 0] < 0] / np.abs(normals[normals[:, 0] < 0, 0])
        hi_v, lo_v = float(np.min(up)), float(np.max(lo))
        vertices = np.array([[lo_v]]) if abs(hi_v - lo_v) <= VERTEX_TOL else np.array([[lo_v], [hi_v]])
    elif d == 2:
        box = 4.0 * (1.0 + scale + float(np.max(np.abs(offsets), initial=0.0)))
        pts = _clip_2d(normals, offsets, box)
        vertices = _hull_2d(pts) if pts else np.zeros((0, 2))
    return Polytope(normals, offsets, vertices, exact)


def contains(p: Polytope, y, tol=MEMBERSHIP_TOL) -> bool:
    y = np.asarray(y, dtype=float).reshape(p.dimension)
    return bool(np.all(p.normals @ y <= p.offsets + tol))


def vertex_distance(P, Q):
    """Hausdorff distance between two finite vertex lists."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if len(P) == 0 or len(Q) == 0:
        return 0.0 if len(P) == len(Q) else np.inf
    D = np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


# -- the sets ------------------------------------------------------------------------------

def _scale(*measures):
    return float(max(np.max(np.abs(m.points), initial=0.0) for m in measures))


def cx_set(mu: DiscreteMeasure, nu: DiscreteMeasure, x, n_directions=None) -> Polytope:
    """C_x: intersection of {<u, y> <= threshold(mu, nu, x, u)} over a direction set."""
    return cx_set_subset(mu, nu, [x], n_directions)


def cx_set_subset(mu: DiscreteMeasure, nu: DiscreteMeasure, E, n_directions=None) -> Polytope:
    """C_E: half-space offsets are the maximum over x in E of the per-point thresholds."""
    if mu.dimension != nu.dimension:
        raise DimensionMismatch("mu and nu have different dimensions")
    E = np.asarray(E, dtype=float).reshape(-1, mu.dimension) if len(E) else np.zeros((0, mu.dimension))
    if len(E) == 0:
        raise EmptySubset("E must contain at least one point")
    pts = np.vstack([union_support(mu, nu), E])
    U, exact = direction_set(pts, mu.dimension, n_directions)
    offs = np.max(np.vstack([thresholds(mu, nu, x, U) for x in E]), axis=0)
    return polytope_from_halfspaces(U, offs, exact, _scale(mu, nu))


def support_hull(nu: DiscreteMeasure, n_directions=None) -> Polytope:
    """Convex hull of Supp(nu) as half-spaces with offsets max <u, y>."""
    if len(nu) == 0:
        raise ValueError("support hull of an empty measure")
    U, exact = direction_set(nu.points, nu.dimension, n_directions)
    offs = support_offsets(nu, U)
    poly = polytope_from_halfspaces(U, offs, exact, _scale(nu))
    if nu.dimension == 2:
        poly.vertices = _hull_2d(nu.points)
    return poly


def membership_weights(points, x):
    """Basic feasible convex weights expressing ``x`` over ``points`` (or None)."""
    points = np.asarray(points, dtype=float)
    k, d = points.shape
    if k == 0:
        return None
    A = np.vstack([np.ones(k), points.T])
    b = np.concatenate([[1.0], np.asarray(x, dtype=float)])
    lp = LinearProgram(c=np.zeros(k), A=A, b=b, relations=["="] * (d + 1))
    out = solve(lp, phase_one_only=True)
    if out.status is Status.INFEASIBLE:
        return None
    return np.clip(out.x, 0.0, None)


def find_witness(mu: DiscreteMeasure, nu: DiscreteMeasure, x, n_directions=None,
                 exclude=None) -> WitnessSimplex:
    """At most d+1 atoms of nu, inside C_x and distinct from x, with x in their hull.

    Atoms listed in ``exclude`` are not used.
    """
    x = np.asarray(x, dtype=float).reshape(mu.dimension)
    if not mu.mass_at(x) > nu.mass_at(x):
        raise NoWitness("a witness requires mu({x}) > nu({x})")
    C = cx_set(mu, nu, x, n_directions)
    skip = np.zeros((0, mu.dimension)) if exclude is None else np.asarray(exclude, dtype=float).reshape(-1, mu.dimension)
    cand = [y for y in nu.points
            if np.max(np.abs(y - x)) > 1e-12 and contains(C, y)
            and not np.any(np.max(np.abs(skip - y), axis=1) <= 1e-12)]
    cand = np.array(cand).reshape(-1, mu.dimension)
    w = membership_weights(cand, x)
    if w is None:
        raise NoWitness(f"{x} is not a convex combination of nu atoms in C_x")
    keep = w > 1e-12
    pts, w = cand[keep], w[keep]
    w = w / w.sum()
    wit = WitnessSimplex(x, pts, w, C)
    problems = witness_problems(wit, C)
    if problems:
        raise NoWitness("; ".join(problems))
    return wit


def witness_problems(w: WitnessSimplex, C: Polytope | None = None, d=None):
    """Direct-arithmetic checks of a witness simplex; returns a list of failures."""
    d = len(w.x) if d is None else d
    issues = []
    if not 2 <= w.k <= d + 1:
        issues.append(f"simplex has {w.k} points, expected 2..{d + 1}")
    if np.any(w.weights < 0) or abs(w.weights.sum() - 1.0) > 1e-12:
        issues.append("weights are not convex coefficients")
    if np.max(np.abs(w.weights @ w.points - w.x), initial=0.0) > 1e-8:
        issues.append("weighted points do not average to x")
    if C is not None:
        for y in w.points:
            if not contains(C, y):
                issues.append(f"point {y} lies outside C_x")
    return issues
