"""Re-validation of serialized certificates by direct arithmetic (no LP solves).

Each checker takes the JSON dictionary as written by the CLI together with the
measures it refers to and returns a list of human-readable failures; an empty
list means the certificate holds.
"""
from __future__ import annotations

import numpy as np

from .geometry import Polytope, WitnessSimplex, cx_set, thresholds, witness_problems
from .measures import DiscreteMeasure
from .order import (CERT_TOL, ConvexSeparator, Coupling, Relation, coupling_problems,
                    separator_problems)

KERNEL_TRANSPORT_TOL = 1e-6
KERNEL_BARYCENTER_TOL = 1e-8
POLYTOPE_TOL = 1e-9


def certificate_kind(data) -> str:
    if "pi" in data:
        return "coupling"
    if "subgradients" in data:
        return "separator"
    if "kernel" in data:
        return "kernel"
    if "halfspaces" in data:
        return "polytope"
    if "weights" in data:
        return "witness"
    raise ValueError("unrecognized certificate JSON")


def _align(points, ref: DiscreteMeasure, label):
    """Index of each certificate point in ``ref``; raises on unknown points."""
    idx = []
    for p in np.asarray(points, dtype=float).reshape(-1, ref.dimension):
        i = ref.index_of(p, tol=1e-9)
        if i is None:
            raise ValueError(f"{label} point {p.tolist()} is not an atom of the measure")
        idx.append(i)
    return idx


def check_coupling(data, mu, nu, relation=None):
    c = Coupling.from_dict(data, relation)
    try:
        ri, ci = _align(c.rows, mu, "row"), _align(c.cols, nu, "column")
    except ValueError as exc:
        return [str(exc)]
    if len(set(ri)) != len(mu) and len(mu):
        return ["rows do not cover every atom of mu"]
    pi = np.zeros((len(mu), len(nu)))
    for a, i in enumerate(ri):
        for b, j in enumerate(ci):
            pi[i, j] += c.pi[a, b]
    return coupling_problems(Coupling(pi, mu.points, nu.points, c.relation), mu, nu)


def check_separator(data, mu, nu, relation=None):
    s = ConvexSeparator.from_dict(data, relation)
    pts = s.points
    for m, label in ((mu, "mu"), (nu, "nu")):
        for p in m.points:
            if np.min(np.max(np.abs(pts - p), axis=1), initial=np.inf) > 1e-9:
                return [f"{label} atom {p.tolist()} is missing from the separator points"]
    return separator_problems(s, mu, nu)


def check_kernel(data, mu, nu):
    K = np.array(data["kernel"], dtype=float)
    rows = np.array(data["rows"], dtype=float).reshape(-1, mu.dimension)
    cols = np.array(data["cols"], dtype=float).reshape(-1, mu.dimension)
    issues = []
    if K.shape != (len(rows), len(cols)):
        return [f"kernel has shape {K.shape}, expected {(len(rows), len(cols))}"]
    if np.min(K, initial=0.0) < -CERT_TOL:
        issues.append("negative kernel entry")
    if np.max(np.abs(K.sum(axis=1) - 1.0), initial=0.0) > CERT_TOL:
        issues.append("rows do not sum to one")
    res = np.max(np.abs(K @ cols - rows), axis=1, initial=0.0) if len(rows) else np.zeros(0)
    if np.max(res, initial=0.0) > KERNEL_BARYCENTER_TOL:
        issues.append(f"row barycenter residual {np.max(res):.3g}")
    masses = np.array([mu.mass_at(r, tol=1e-9) for r in rows])
    if abs(masses.sum() - mu.masses.sum()) > CERT_TOL:
        issues.append("kernel rows do not cover mu")
    image = masses @ K
    target = np.array([nu.mass_at(c, tol=1e-9) for c in cols])
    err = float(np.sum(np.abs(image - target)) + abs(nu.masses.sum() - target.sum()))
    if err > KERNEL_TRANSPORT_TOL:
        issues.append(f"|mu K - nu|_1 = {err:.3g}")
    return issues


def check_polytope(data, mu=None, nu=None, points=None):
    """Vertices satisfy every half-space; with measures and the defining points,
    each offset equals the largest threshold along its normal."""
    P = Polytope.from_dict(data)
    issues = []
    if P.vertices is not None and len(P.vertices):
        slack = P.vertices @ P.normals.T - P.offsets[None, :]
        if np.max(slack) > POLYTOPE_TOL * (1 + np.max(np.abs(P.offsets))):
            issues.append("a vertex violates a half-space")
    if mu is not None and nu is not None and points is not None:
        E = np.asarray(points, dtype=float).reshape(-1, mu.dimension)
        ref = np.max(np.vstack([thresholds(mu, nu, x, P.normals) for x in E]), axis=0)
        if np.max(np.abs(ref - P.offsets)) > POLYTOPE_TOL * (1 + np.max(np.abs(ref))):
            issues.append("half-space offsets differ from the recomputed thresholds")
    return issues


def check_witness(data, mu, nu, n_directions=None):
    """Convex weights, atoms of nu, average x, every point inside C_x."""
    w = WitnessSimplex(np.array(data["x"], dtype=float), np.array(data["points"], dtype=float),
                       np.array(data["weights"], dtype=float))
    issues = []
    for y in w.points:
        if nu.index_of(y, tol=1e-9) is None:
            issues.append(f"witness point {y.tolist()} is not an atom of nu")
    C = cx_set(mu, nu, w.x, n_directions)
    return issues + witness_problems(w, C, mu.dimension)


def validate_certificate(data, mu: DiscreteMeasure, nu: DiscreteMeasure, relation=None, points=None):
    """Dispatch on the certificate's keys; returns ``(kind, problems)``."""
    kind = certificate_kind(data)
    if relation is not None:
        relation = Relation.parse(relation)
    if kind == "coupling":
        return kind, check_coupling(data, mu, nu, relation)
    if kind == "separator":
        return kind, check_separator(data, mu, nu, relation)
    if kind == "kernel":
        return kind, check_kernel(data, mu, nu)
    if kind == "polytope":
        return kind, check_polytope(data, mu, nu, points)
    return kind, check_witness(data, mu, nu)
