"""Finitely supported measures on R^d, their projections and survival functions."""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import BadDirection, DimensionMismatch, ZeroMass

DEDUP_TOL = 1e-12
DIRECTION_TOL = 1e-9


@dataclass(frozen=True)
class Atom:
    point: tuple
    mass: float

    def __post_init__(self):
        if not self.mass >= 0:
            raise ValueError(f"atom mass must be nonnegative, got {self.mass}")


@dataclass(frozen=True)
class ProjectedMeasure:
    """Image of a measure under y -> <u, y>, with equal projections merged."""

    breakpoints: np.ndarray
    masses: np.ndarray

    def survival(self, a):
        a = np.asarray(a, dtype=float)
        return np.sum(self.masses * np.maximum(self.breakpoints - a[..., None], 0.0), axis=-1)


class DiscreteMeasure:
    """A finite nonnegative combination of Dirac masses in R^d.

    Atoms whose points agree within ``DEDUP_TOL`` (max-norm) are merged and
    zero-mass atoms are dropped, so ``points`` is a list of distinct support
    points in first-appearance order.

    Optional exact data (``rational_points`` / ``rational_masses``) is kept for
    exact re-validation of certificates; when absent the float values are
    converted exactly with ``Fraction``.
    """

    __slots__ = ("dimension", "points", "masses", "_exact_points", "_exact_masses")

    def __init__(self, dimension, points=None, masses=None, *,
                 rational_points=None, rational_masses=None):
        if int(dimension) <= 0:
            raise ValueError("dimension must be a positive integer")
        d = int(dimension)
        pts = np.zeros((0, d)) if points is None else np.asarray(points, dtype=float)
        if pts.ndim == 1 and pts.size and d == 1:
            pts = pts.reshape(-1, 1)
        pts = pts.reshape(-1, d) if pts.size == 0 else pts
        ms = np.zeros(0) if masses is None else np.asarray(masses, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[1] != d:
            raise DimensionMismatch(f"points must have shape (k, {d}), got {pts.shape}")
        if pts.shape[0] != ms.shape[0]:
            raise DimensionMismatch("points and masses have different lengths")
        if np.any(~np.isfinite(pts)) or np.any(~np.isfinite(ms)):
            raise ValueError("points and masses must be finite")
        if np.any(ms < 0):
            raise ValueError("masses must be nonnegative")

        ex_pts = None if rational_points is None else [tuple(Fraction(c) for c in p) for p in rational_points]
        ex_ms = None if rational_masses is None else [Fraction(m) for m in rational_masses]

        keep_pts, keep_ms, keep_ex_pts, keep_ex_ms = [], [], [], []
        for i in range(pts.shape[0]):
            if ms[i] == 0.0 and (ex_ms is None or ex_ms[i] == 0):
                continue
            for k, q in enumerate(keep_pts):
                if np.max(np.abs(q - pts[i])) <= DEDUP_TOL:
                    keep_ms[k] += ms[i]
                    if ex_ms is not None:
                        keep_ex_ms[k] += ex_ms[i]
                    break
            else:
                keep_pts.append(pts[i].copy())
                keep_ms.append(float(ms[i]))
                if ex_pts is not None:
                    keep_ex_pts.append(ex_pts[i])
                if ex_ms is not None:
                    keep_ex_ms.append(ex_ms[i])

        self.dimension = d
        self.points = np.array(keep_pts, dtype=float).reshape(-1, d)
        self.masses = np.array(keep_ms, dtype=float)
        self.points.setflags(write=False)
        self.masses.setflags(write=False)
        self._exact_points = tuple(keep_ex_pts) if ex_pts is not None else None
        self._exact_masses = tuple(keep_ex_ms) if ex_ms is not None else None

    @classmethod
    def from_atoms(cls, atoms: Iterable[Atom], dimension: int | None = None):
        atoms = list(atoms)
        if dimension is None:
            if not atoms:
                raise ValueError("dimension is required for an empty measure")
            dimension = len(atoms[0].point)
        for a in atoms:
            if len(a.point) != dimension:
                raise DimensionMismatch("atom point has the wrong dimension")
        return cls(dimension, [a.point for a in atoms], [a.mass for a in atoms])

    @classmethod
    def dirac(cls, point, mass=1.0):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(point.size, [point], [mass])

    def __len__(self):
        return self.masses.shape[0]

    def __repr__(self):
        atoms = ", ".join(f"{m:g}@{tuple(np.round(p, 6))}" for p, m in zip(self.points, self.masses))
        return f"DiscreteMeasure(d={self.dimension}, [{atoms}])"

    @property
    def atoms(self):
        return [Atom(tuple(p), float(m)) for p, m in zip(self.points, self.masses)]

    def exact_points(self):
        if self._exact_points is not None:
            return list(self._exact_points)
        return [tuple(Fraction(float(c)) for c in p) for p in self.points]

    def exact_masses(self):
        if self._exact_masses is not None:
            return list(self._exact_masses)
        return [Fraction(float(m)) for m in self.masses]

    def mass_at(self, point, tol=DEDUP_TOL):
        idx = self.index_of(point, tol)
        return 0.0 if idx is None else float(self.masses[idx])

    def index_of(self, point, tol=DEDUP_TOL):
        if len(self) == 0:
            return None
        dist = np.max(np.abs(self.points - np.asarray(point, dtype=float)), axis=1)
        i = int(np.argmin(dist))
        return i if dist[i] <= tol else None

    def scaled(self, factor):
        ex = None if self._exact_masses is None else [m * Fraction(factor) for m in self._exact_masses]
        return DiscreteMeasure(self.dimension, self.points, self.masses * factor,
                               rational_points=self._exact_points, rational_masses=ex)

    def translated(self, shift):
        shift = np.asarray(shift, dtype=float)
        return DiscreteMeasure(self.dimension, self.points + shift, self.masses)

    def __add__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        if other.dimension != self.dimension:
            raise DimensionMismatch("cannot add measures of different dimension")
        return DiscreteMeasure(self.dimension,
                               np.vstack([self.points, other.points]),
                               np.concatenate([self.masses, other.masses]))

    # -- serialization -------------------------------------------------------
    def to_dict(self):
        return {
            "dimension": self.dimension,
            "atoms": [{"point": [float(c) for c in p], "mass": float(m)}
                      for p, m in zip(self.points, self.masses)],
        }

    @classmethod
    def from_dict(cls, data, exact=False):
        try:
            d = int(data["dimension"])
            raw = data["atoms"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed measure JSON: {exc}") from None
        points, masses, r_points, r_masses = [], [], [], []
        has_rational = False
        for atom in raw:
            p = atom["point"]
            if len(p) != d:
                raise DimensionMismatch(f"atom {p} does not have dimension {d}")
            if "rational" in atom:
                if not exact:
                    raise ValueError('"rational" masses are only accepted in exact mode')
                has_rational = True
                q = Fraction(atom["rational"])
                masses.append(float(q))
                r_masses.append(q)
            else:
                masses.append(float(atom["mass"]))
                r_masses.append(Fraction(float(atom["mass"])))
            if any(isinstance(c, str) for c in p):
                if not exact:
                    raise ValueError("rational coordinates are only accepted in exact mode")
                has_rational = True
            r_point = [Fraction(c) if isinstance(c, str) else Fraction(float(c)) for c in p]
            points.append([float(c) for c in r_point])
            r_points.append(r_point)
        if not points:
            return cls(d)
        if has_rational:
            return cls(d, points, masses, rational_points=r_points, rational_masses=r_masses)
        return cls(d, points, masses)

    @classmethod
    def load(cls, path, exact=False):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), exact=exact)

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def total_mass(m: DiscreteMeasure) -> float:
    return float(np.sum(m.masses))


def barycenter(m: DiscreteMeasure) -> np.ndarray:
    mass = total_mass(m)
    if mass <= 0:
        raise ZeroMass("barycenter of a zero-mass measure is undefined")
    return (m.masses @ m.points) / mass


def check_direction(u, dimension):
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (dimension,):
        raise DimensionMismatch(f"direction must have length {dimension}")
    if abs(np.linalg.norm(u) - 1.0) > DIRECTION_TOL:
        raise BadDirection(f"direction {u} is not a unit vector")
    return u


def project(m: DiscreteMeasure, u) -> ProjectedMeasure:
    """Push ``m`` forward by y -> <u, y>, merging coincident projections."""
    u = check_direction(u, m.dimension)
    if len(m) == 0:
        return ProjectedMeasure(np.zeros(0), np.zeros(0))
    proj = m.points @ u
    order = np.argsort(proj, kind="stable")
    bps, ms = [], []
    for i in order:
        if bps and proj[i] - bps[-1] <= DEDUP_TOL:
            ms[-1] += m.masses[i]
        else:
            bps.append(float(proj[i]))
            ms.append(float(m.masses[i]))
    return ProjectedMeasure(np.array(bps), np.array(ms))


def survival(m: DiscreteMeasure, u, a):
    """Stop-loss transform sum_y m(y) (<u, y> - a)^+ ; vectorized over ``a``."""
    u = check_direction(u, m.dimension)
    proj = m.points @ u
    a = np.asarray(a, dtype=float)
    out = np.sum(m.masses * np.maximum(proj - a[..., None], 0.0), axis=-1)
    return float(out) if out.ndim == 0 else out


def union_support(*measures: DiscreteMeasure) -> np.ndarray:
    """Distinct support points of several measures, in first-appearance order."""
    d = measures[0].dimension
    pts = np.vstack([m.points for m in measures]) if measures else np.zeros((0, d))
    return DiscreteMeasure(d, pts, np.ones(len(pts))).points


def masses_on(m: DiscreteMeasure, points: Sequence) -> np.ndarray:
    """Masses of ``m`` at each of ``points`` (zero off the support)."""
    out = np.zeros(len(points))
    for i, p in enumerate(points):
        out[i] = m.mass_at(p)
    return out
