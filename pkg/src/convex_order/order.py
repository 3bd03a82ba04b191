"""Deciding mu <= nu in the cx, cxp and cxpi orders, with certificates.

Primal side: a coupling ``pi`` over Supp(mu) x Supp(nu) with

* row sums equal to the masses of mu,
* column sums equal to (cx) or bounded by (cxp, cxpi) the masses of nu,
* each row averaging to its atom (cx, cxp), or dominating it componentwise
  (cxpi): ``sum_j pi_ij y_j >= mu_i x_i``.

By Jensen's inequality any such coupling certifies the order. Dual side: a
discrete convex function (values and subgradients on Supp(mu) u Supp(nu)),
nonnegative for cxp and additionally nondecreasing for cxpi, whose mu-integral
exceeds its nu-integral. The two LPs are solved independently.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatch, NoWitness, NotOrderedOnLine, NotSymmetric, NumericalFailure, OrthantViolation, Stalled
from .geometry import find_witness, membership_weights
from .lp_core import LinearProgram, Status, farkas_residual, solve
from .measures import DiscreteMeasure, union_support

GAP_TOL = 1e-7
CERT_TOL = 1e-8
ORTHANT_TOL = 1e-12
MASS_TOL = 1e-12


class Relation(str, enum.Enum):
    CX = "cx"
    CXP = "cxp"
    CXPI = "cxpi"

    @classmethod
    def parse(cls, value):
        if isinstance(value, Relation):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown relation {value!r}; expected cx, cxp or cxpi") from None


@dataclass
class Coupling:
    pi: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    relation: Relation
    exact_pi: list | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "relation": self.relation.value,
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "pi": self.pi.tolist(),
        }

    @classmethod
    def from_dict(cls, data, relation=None):
        rel = Relation.parse(relation or data.get("relation", "cx"))
        return cls(np.array(data["pi"], dtype=float), np.array(data["rows"], dtype=float),
                   np.array(data["cols"], dtype=float), rel)


@dataclass
class ConvexSeparator:
    points: np.ndarray
    values: np.ndarray
    subgradients: np.ndarray
    relation: Relation
    gap: float = 0.0

    def to_dict(self):
        return {
            "relation": self.relation.value,
            "points": self.points.tolist(),
            "values": self.values.tolist(),
            "subgradients": self.subgradients.tolist(),
            "gap": float(self.gap),
        }

    @classmethod
    def from_dict(cls, data, relation=None):
        rel = Relation.parse(relation or data.get("relation", "cx"))
        pts = np.array(data["points"], dtype=float)
        return cls(pts, np.array(data["values"], dtype=float),
                   np.array(data["subgradients"], dtype=float).reshape(pts.shape), rel,
                   float(data.get("gap", 0.0)))

    def __call__(self, y):
        """Evaluate the convex extension max_p (v_p + <g_p, y - p>), floored at 0 for cxp/cxpi."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        aff = self.values[None, :] + np.einsum("pd,npd->np", self.subgradients,
                                               y[:, None, :] - self.points[None, :, :])
        val = aff.max(axis=1)
        if self.relation is not Relation.CX:
            val = np.maximum(val, 0.0)
        return val


@dataclass
class Verdict:
    ordered: bool
    relation: Relation
    coupling: Coupling | None = None
    separator: ConvexSeparator | None = None

    def certificate(self):
        return self.coupling if self.ordered else self.separator


@dataclass
class Kernel:
    """Row-stochastic martingale kernel from Supp(mu) to ``cols`` with mu K = nu."""

    matrix: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    method: str
    rounds: int = 0
    note: str = ""

    def to_dict(self, mu=None):
        out = {
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "kernel": self.matrix.tolist(),
            "method": self.method,
            "rounds": self.rounds,
            "barycenter_residuals": kernel_barycenter_residuals(self).tolist(),
        }
        if self.note:
            out["note"] = self.note
        if mu is not None:
            out["row_masses"] = [float(v) for v in mu.masses]
        return out


# -- input checks --------------------------------------------------------------------

def _check_pair(mu, nu, rel):
    rel = Relation.parse(rel)
    if mu.dimension != nu.dimension:
        raise DimensionMismatch(f"mu has dimension {mu.dimension}, nu has {nu.dimension}")
    if rel is Relation.CXPI:
        for name, m in (("mu", mu), ("nu", nu)):
            if len(m) and np.min(m.points) < -ORTHANT_TOL:
                raise OrthantViolation(f"{name} has atoms outside the nonnegative orthant")
    return rel


def _pair_scale(mu, nu):
    pts = np.vstack([mu.points, nu.points])
    return 1.0 + float(np.max(np.abs(pts), initial=0.0))


# -- primal: couplings --------------------------------------------------------------

def coupling_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, rel) -> LinearProgram:
    """Feasibility LP over pi (row-major, len(mu) x len(nu))."""
    rel = Relation.parse(rel)
    m, n, d = len(mu), len(nu), mu.dimension
    X, Y = mu.points, nu.points
    rows, rhs, rels = [], [], []
    for i in range(m):
        r = np.zeros(m * n)
        r[i * n:(i + 1) * n] = 1.0
        rows.append(r), rhs.append(mu.masses[i]), rels.append("=")
    col_rel = "=" if rel is Relation.CX else "<="
    for j in range(n):
        r = np.zeros(m * n)
        r[j::n] = 1.0
        rows.append(r), rhs.append(nu.masses[j]), rels.append(col_rel)
    bary_rel = ">=" if rel is Relation.CXPI else "="
    for i in range(m):
        for k in range(d):
            r = np.zeros(m * n)
            r[i * n:(i + 1) * n] = Y[:, k] - X[i, k]
            if not np.any(r):
                continue
            rows.append(r), rhs.append(0.0), rels.append(bary_rel)
    A = np.array(rows).reshape(-1, m * n)
    return LinearProgram(c=np.zeros(m * n), A=A, b=np.array(rhs), relations=rels)


def coupling_problems(c: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure, tol=CERT_TOL):
    """Direct float checks of the coupling invariants; returns a list of failures."""
    issues = []
    pi = c.pi
    scale = _pair_scale(mu, nu)
    if pi.shape != (len(mu), len(nu)):
        return [f"pi has shape {pi.shape}, expected {(len(mu), len(nu))}"]
    if np.min(pi, initial=0.0) < -tol:
        issues.append("negative entry in pi")
    if np.max(np.abs(pi.sum(axis=1) - mu.masses), initial=0.0) > tol:
        issues.append("row sums differ from mu masses")
    col = pi.sum(axis=0) - nu.masses
    if c.relation is Relation.CX:
        if np.max(np.abs(col), initial=0.0) > tol:
            issues.append("column sums differ from nu masses")
    elif np.max(col, initial=0.0) > tol:
        issues.append("column sums exceed nu masses")
    bary = pi @ nu.points - mu.masses[:, None] * mu.points
    if c.relation is Relation.CXPI:
        if np.min(bary, initial=0.0) < -tol * scale:
            issues.append("row barycenters fall below their atoms")
    elif np.max(np.abs(bary), initial=0.0) > tol * scale:
        issues.append("row barycenters differ from their atoms")
    return issues


def build_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure, rel) -> Coupling | None:
    rel = _check_pair(mu, nu, rel)
    if len(mu) == 0:
        if rel is Relation.CX and np.sum(nu.masses) > MASS_TOL:
            return None
        return Coupling(np.zeros((0, len(nu))), mu.points, nu.points, rel)
    if np.sum(mu.masses) > np.sum(nu.masses) + MASS_TOL:
        return None
    if len(nu) == 0:
        return None
    lp = coupling_lp(mu, nu, rel)
    for exact in (False, True):
        try:
            out = solve(lp, exact=exact, phase_one_only=True)
        except NumericalFailure:
            continue
        if out.status is Status.INFEASIBLE:
            worst, margin = farkas_residual(out)
            if exact or (worst <= 1e-9 and margin > 1e-9):
                return None
            continue
        pi = np.clip(np.array([float(v) for v in out.x]).reshape(len(mu), len(nu)), 0.0, None)
        pi[pi < 1e-15] = 0.0
        cpl = Coupling(pi, mu.points.copy(), nu.points.copy(), rel)
        if not coupling_problems(cpl, mu, nu):
            return cpl
    raise NumericalFailure("coupling LP could not be solved to a valid point")


def exact_coupling(c: Coupling, mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Rational coupling on the support of ``c`` satisfying every invariant exactly.

    The coupling LP restricted to the float support is re-solved over the
    rationals from the exact input data; the result is then checked by direct
    rational arithmetic. Returns the rational matrix or ``None``.
    """
    m, n = len(mu), len(nu)
    X, Y = mu.exact_points(), nu.exact_points()
    a, b = mu.exact_masses(), nu.exact_masses()
    d = mu.dimension
    tol = 1e-12 * max(1.0, float(np.max(c.pi, initial=0.0)))
    support = [(i, j) for i in range(m) for j in range(n) if c.pi[i, j] > tol]
    Z = Fraction(0)
    rows, rhs, rels = [], [], []
    for i in range(m):
        rows.append([Fraction(1) if si == i else Z for si, _ in support]), rhs.append(a[i]), rels.append("=")
    col_rel = "=" if c.relation is Relation.CX else "<="
    for j in range(n):
        rows.append([Fraction(1) if sj == j else Z for _, sj in support]), rhs.append(b[j]), rels.append(col_rel)
    bary_rel = ">=" if c.relation is Relation.CXPI else "="
    for i in range(m):
        for k in range(d):
            rows.append([Y[sj][k] - X[i][k] if si == i else Z for si, sj in support])
            rhs.append(Z), rels.append(bary_rel)
    if not support:
        ok = all(v == 0 for v in a) and (c.relation is not Relation.CX or all(v == 0 for v in b))
        return [[Z] * n for _ in range(m)] if ok else None
    A = np.empty((len(rows), len(support)), dtype=object)
    for r, row in enumerate(rows):
        A[r, :] = row
    lp = LinearProgram(c=np.array([Z] * len(support), dtype=object), A=A,
                       b=np.array(rhs, dtype=object), relations=rels)
    out = solve(lp, exact=True, phase_one_only=True)
    if out.status is Status.INFEASIBLE:
        return None
    pi = [[Z] * n for _ in range(m)]
    for (i, j), v in zip(support, out.x):
        pi[i][j] = v
    return pi if exact_coupling_holds(pi, X, a, Y, b, c.relation) else None


def exact_coupling_holds(pi, X, a, Y, b, rel):
    m, n, d = len(X), len(Y), len(X[0]) if X else 0
    if any(v < 0 for row in pi for v in row):
        return False
    for i in range(m):
        if sum(pi[i]) != a[i]:
            return False
        for k in range(d):
            s = sum(pi[i][j] * (Y[j][k] - X[i][k]) for j in range(n))
            if (rel is Relation.CXPI and s < 0) or (rel is not Relation.CXPI and s != 0):
                return False
    for j in range(n):
        s = sum(pi[i][j] for i in range(m))
        if (rel is Relation.CX and s != b[j]) or s > b[j]:
            return False
    return True


# -- dual: convex separators -----------------------------------------------------------

def separator_lp(mu, nu, rel, slope_bound=None):
    rel = Relation.parse(rel)
    P = union_support(mu, nu)
    k, d = P.shape
    weight = np.array([mu.mass_at(p) - nu.mass_at(p) for p in P])
    nv = k + k * d
    c = np.concatenate([weight, np.zeros(k * d)])
    rows = []
    for p in range(k):
        for q in range(k):
            if p == q:
                continue
            r = np.zeros(nv)
            r[q] += 1.0
            r[p] -= 1.0
            r[k + p * d:k + (p + 1) * d] = -(P[q] - P[p])
            rows.append(r)
    A = np.array(rows).reshape(-1, nv)
    lower = np.concatenate([np.full(k, -1.0 if rel is Relation.CX else 0.0),
                            np.full(k * d, 0.0 if rel is Relation.CXPI else
                                    (-slope_bound if slope_bound else -np.inf))])
    upper = np.concatenate([np.ones(k), np.full(k * d, slope_bound if slope_bound else np.inf)])
    lp = LinearProgram(c=c, A=A, b=np.zeros(len(rows)), relations=[">="] * len(rows),
                       sense="max", lower=lower, upper=upper)
    return lp, P


def separator_problems(s: ConvexSeparator, mu, nu, tol=CERT_TOL):
    issues = []
    P, v, g = s.points, s.values, s.subgradients
    diff = P[None, :, :] - P[:, None, :]           # [p, q] = q - p
    lower = v[:, None] + np.einsum("pd,pqd->pq", g, diff)
    if np.max(lower - v[None, :], initial=0.0) > tol:
        issues.append("values are not discretely convex")
    if s.relation is not Relation.CX and np.min(v, initial=0.0) < -tol:
        issues.append("negative value")
    if s.relation is Relation.CXPI and np.min(g, initial=0.0) < -tol:
        issues.append("negative subgradient component")
    gap = separation_gap(s, mu, nu)
    if not gap > 0:
        issues.append(f"no separation (gap {gap:.3g})")
    return issues


def separation_gap(s: ConvexSeparator, mu, nu):
    return float(np.sum(mu.masses * s(mu.points)) - np.sum(nu.masses * s(nu.points))) if len(mu) or len(nu) else 0.0


def default_slope_bound(P):
    """Slope box for the separator LP: twice the inverse of the smallest point gap.

    Any separating function can be rescaled into the box, so the bound only
    affects the size of the reported gap, never its sign; this choice keeps
    hinge functions kinking between neighbouring atoms at full height.
    """
    if len(P) < 2:
        return 1.0
    diff = np.max(np.abs(P[:, None, :] - P[None, :, :]), axis=2)
    gap = np.min(diff[np.triu_indices(len(P), 1)])
    return 2.0 / gap


def find_separator(mu: DiscreteMeasure, nu: DiscreteMeasure, rel, slope_bound=None) -> ConvexSeparator | None:
    """Maximize the mu-minus-nu integral of a bounded discrete convex function.

    Returns ``None`` when the optimal gap is at most ``GAP_TOL``. The float
    solve is re-done in exact arithmetic if its output fails validation.
    """
    rel = _check_pair(mu, nu, rel)
    if len(mu) == 0 and len(nu) == 0:
        return None
    P = union_support(mu, nu)
    bound = default_slope_bound(P) if slope_bound is None else slope_bound
    lp, P = separator_lp(mu, nu, rel, bound)
    for exact in (False, True):
        try:
            out = solve(lp, exact=exact)
        except NumericalFailure:
            continue
        if out.status is not Status.OPTIMAL:
            continue
        if float(out.objective) <= GAP_TOL:
            return None
        x = np.array([float(v) for v in out.x])
        k, d = P.shape
        sep = ConvexSeparator(P, x[:k].copy(), x[k:].reshape(k, d).copy(), rel)
        sep.gap = separation_gap(sep, mu, nu)
        if not separator_problems(sep, mu, nu):
            return sep
    raise NumericalFailure("separator LP could not be solved to a valid certificate")


def exact_separator(s: ConvexSeparator, mu, nu):
    """Round a float separator to an exactly valid rational one.

    Values are replaced by the rational convex function
    f(y) = max_p (v_p + <g_p, y - p>) (floored at 0 for cxp/cxpi) evaluated at
    the points, with the active piece's gradient as subgradient; f is convex by
    construction, so only the separation gap needs checking. Returns
    ``(values, subgradients, gap)`` or ``None`` when the gap is not positive.
    """
    P = [_exact_point(p, mu, nu) for p in s.points]
    v = [Fraction(float(x)) for x in s.values]
    g = [[Fraction(float(x)) for x in row] for row in s.subgradients]
    if s.relation is Relation.CXPI:
        g = [[max(x, Fraction(0)) for x in row] for row in g]
    d = len(P[0]) if P else 0
    zero_grad = [Fraction(0)] * d
    vals, grads = [], []
    for q in P:
        best, arg = None, None
        for p, vp, gp in zip(P, v, g):
            val = vp + sum(gi * (qi - pi) for gi, qi, pi in zip(gp, q, p))
            if best is None or val > best:
                best, arg = val, gp
        if s.relation is not Relation.CX and best < 0:
            best, arg = Fraction(0), zero_grad
        vals.append(best)
        grads.append(list(arg))
    if not exact_separator_holds(P, vals, grads, s.relation):
        return None
    total = Fraction(0)
    for m, sign in ((mu, 1), (nu, -1)):
        for pt, mass in zip(m.points, m.exact_masses()):
            total += sign * mass * vals[_index(s.points, pt)]
    if total <= 0:
        return None
    return vals, grads, total


def _exact_point(p, mu, nu):
    for m in (mu, nu):
        idx = m.index_of(p)
        if idx is not None:
            return m.exact_points()[idx]
    return tuple(Fraction(float(c)) for c in p)


def exact_separator_holds(P, vals, grads, rel):
    for p, vp, gp in zip(P, vals, grads):
        for q, vq in zip(P, vals):
            if vq < vp + sum(gi * (qi - pi) for gi, qi, pi in zip(gp, q, p)):
                return False
    if rel is not Relation.CX and any(v < 0 for v in vals):
        return False
    if rel is Relation.CXPI and any(x < 0 for row in grads for x in row):
        return False
    return True


# -- decisions -------------------------------------------------------------------------

def check_support_hull(mu: DiscreteMeasure, nu: DiscreteMeasure) -> bool:
    """Every atom of mu lies in the convex hull of Supp(nu)."""
    if mu.dimension != nu.dimension:
        raise DimensionMismatch("mu and nu have different dimensions")
    if len(mu) == 0:
        return True
    if len(nu) == 0:
        return False
    for x in mu.points:
        w = membership_weights(nu.points, x)
        if w is None or np.max(np.abs(w @ nu.points - x)) > 1e-8 * _pair_scale(mu, nu):
            return False
    return True


def check_order(mu: DiscreteMeasure, nu: DiscreteMeasure, rel) -> Verdict:
    rel = _check_pair(mu, nu, rel)
    coupling = None
    if rel is Relation.CXPI or check_support_hull(mu, nu):
        coupling = build_coupling(mu, nu, rel)
    if coupling is not None:
        return Verdict(True, rel, coupling=coupling)
    sep = find_separator(mu, nu, rel)
    if sep is None:
        raise NumericalFailure("coupling LP infeasible but no separating function above the gap tolerance")
    return Verdict(False, rel, separator=sep)


def check_mixed_local_condition(Q, H, Hstar, nu_t: DiscreteMeasure, nustar_t: DiscreteMeasure) -> bool:
    """Local comparison of the diffusion and jump parts for phi(y) = <y, Q y>.

    Tr(Q H) + sum nu_t(x) <x, Q x>  <=  Tr(Q H*) + sum nu*_t(x) <x, Q x>.
    """
    Q, H, Hstar = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (Q, H, Hstar))
    for name, M in (("Q", Q), ("H", H), ("Hstar", Hstar)):
        if M.shape[0] != M.shape[1] or np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * (1 + np.abs(M).max()):
            raise NotSymmetric(f"{name} must be symmetric")
    if not (Q.shape == H.shape == Hstar.shape):
        raise DimensionMismatch("Q, H and Hstar must have the same shape")

    def jump_term(m):
        if len(m) == 0:
            return 0.0
        if m.dimension != Q.shape[0]:
            raise DimensionMismatch("jump measure dimension does not match Q")
        return float(np.sum(m.masses * np.einsum("ni,ij,nj->n", m.points, Q, m.points)))

    lhs = float(np.sum(Q * H)) + jump_term(nu_t)
    rhs = float(np.sum(Q * Hstar)) + jump_term(nustar_t)
    return lhs <= rhs + 1e-10


# -- kernels ----------------------------------------------------------------------------

def kernel_from_coupling(c: Coupling, mu: DiscreteMeasure) -> Kernel:
    K = c.pi / mu.masses[:, None]
    return Kernel(K, c.rows, c.cols, "lp")


def kernel_barycenter_residuals(k: Kernel):
    if len(k.rows) == 0:
        return np.zeros(0)
    return np.max(np.abs(k.matrix @ k.cols - k.rows), axis=1)


def kernel_transport_error(k: Kernel, mu: DiscreteMeasure, nu: DiscreteMeasure):
    """||mu K - nu||_1 over the kernel's column points."""
    image = mu.masses @ k.matrix
    target = np.array([nu.mass_at(p) for p in k.cols])
    off = np.sum(nu.masses) - np.sum(target)
    return float(np.sum(np.abs(image - target)) + abs(off))


def build_kernel_iterative(mu: DiscreteMeasure, nu: DiscreteMeasure, max_rounds=200, eps_floor=2.0 ** -20,
                           allow_fallback=True) -> Kernel:
    """Compose one-point transfer kernels until mu K = nu.

    Each round picks the support point x with the largest excess rho(x) - nu(x)
    of the current image rho = mu K, takes a witness simplex y_1..y_k with
    weights a_i from C_x, and applies x -> (1 - eps) delta_x + eps sum a_i delta_{y_i}.
    eps is the first of e* (= excess / rho(x)), the largest step that fills no
    witness atom beyond its nu-mass, e*/2, e*/4, ... that keeps the image
    cx-dominated by nu, re-checked by the coupling LP. Points with a
    smaller positive excess are tried in turn when the largest one admits no
    step.

    When no point admits a step with eps >= eps_floor * e*, or ``max_rounds``
    is exhausted, the kernel comes from the coupling LP instead
    (``method == "lp-fallback"``), or :class:`Stalled` is raised if fallback
    is disabled.
    """
    _check_pair(mu, nu, Relation.CX)
    P = union_support(mu, nu)
    nP = len(P)
    target = np.array([nu.mass_at(p) for p in P])
    K = np.zeros((len(mu), nP))
    for i, x in enumerate(mu.points):
        K[i, _index(P, x)] = 1.0
    rho = mu.masses @ K
    excess_tol = 1e-10 * (1.0 + float(np.sum(nu.masses)))
    rounds = 0
    reason = ""
    while True:
        excess = rho - target
        if np.sum(np.abs(excess)) <= 1e-9:
            break
        if rounds >= max_rounds:
            reason = f"no convergence within {max_rounds} rounds"
            break
        order = [int(i) for i in np.argsort(-excess, kind="stable") if excess[i] > excess_tol]
        if not order:
            reason = "residual without positive excess"
            break
        accepted, failures = None, []
        for xi in order:
            accepted = _admissible_step(P, rho, nu, xi, excess[xi], eps_floor, mu.dimension, failures)
            if accepted is not None:
                break
        if accepted is None:
            reason = "; ".join(failures[:3])
            break
        K = K @ accepted
        rho = mu.masses @ K
        rounds += 1
    if not reason:
        return _finish_kernel(K, mu, P, nu, "iterative", rounds)
    if not allow_fallback:
        raise Stalled(reason)
    cpl = build_coupling(mu, nu, Relation.CX)
    if cpl is None:
        raise Stalled(f"{reason}; coupling LP is infeasible too")
    kern = kernel_from_coupling(cpl, mu)
    kern.method = "lp-fallback"
    kern.rounds = rounds
    kern.note = reason
    return kern


def _admissible_step(P, rho, nu, xi, excess, eps_floor, d, failures):
    """Largest transfer out of P[xi] along a witness that keeps rho cx-below nu.

    Witnesses avoiding atoms of nu already saturated by rho are tried first.
    """
    current = DiscreteMeasure(d, P, rho)
    capacity = np.array([nu.mass_at(p) for p in P]) - rho
    saturated = P[capacity <= 1e-9]
    e_star = min(1.0, excess / rho[xi])
    seen = []
    for exclude in (saturated, None):
        try:
            wit = find_witness(current, nu, P[xi], exclude=exclude)
        except (NoWitness, NotOrderedOnLine) as exc:
            failures.append(f"no witness at {P[xi].tolist()}: {exc}")
            continue
        key = sorted(map(tuple, np.round(wit.points, 12)))
        if key in seen:
            continue
        seen.append(key)
        for eps in _step_sizes(P, rho, capacity, xi, wit, e_star, eps_floor):
            step = _transfer(P, xi, wit, eps)
            new_rho = rho @ step
            new_rho[np.abs(new_rho) < 1e-15] = 0.0
            trial = DiscreteMeasure(d, P, np.clip(new_rho, 0.0, None))
            if build_coupling(trial, nu, Relation.CX) is not None:
                return step
        failures.append(f"no admissible step at {P[xi].tolist()} down to {eps_floor:g} of the excess")
    return None


def _step_sizes(P, rho, capacity, xi, wit, e_star, eps_floor):
    """e*, then the largest eps filling no witness atom past nu, then e*/2, e*/4, ..."""
    yield e_star
    fill = [capacity[_index(P, y)] / (rho[xi] * a) for y, a in zip(wit.points, wit.weights) if a > 0]
    e_cap = min(fill, default=0.0)
    if eps_floor * e_star <= e_cap < e_star:
        yield e_cap
    eps = e_star / 2
    while eps >= eps_floor * e_star:
        yield eps
        eps /= 2


def _index(P, x):
    return int(np.argmin(np.max(np.abs(P - x), axis=1)))


def _transfer(P, xi, wit, eps):
    step = np.eye(len(P))
    step[xi, xi] = 1.0 - eps
    for y, a in zip(wit.points, wit.weights):
        step[xi, _index(P, y)] += eps * a
    return step


def _finish_kernel(K, mu, P, nu, method, rounds):
    keep = np.array([nu.mass_at(p) > 0 for p in P])
    leak = float(np.max(np.abs(K[:, ~keep]), initial=0.0))
    K = K[:, keep]
    K[K < 1e-15] = 0.0
    K = K / K.sum(axis=1, keepdims=True)
    kern = Kernel(K, mu.points.copy(), P[keep], method, rounds)
    if leak > 1e-6:
        kern.note = f"mass {leak:.3g} left outside Supp(nu)"
    return kern
