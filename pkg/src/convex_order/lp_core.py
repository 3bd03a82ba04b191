"""Dense two-phase primal simplex.

The solver accepts general linear programs (mixed row relations, arbitrary
variable bounds), rewrites them in standard form ``min c z, A z = b, z >= 0``
and runs a tableau simplex with Dantzig pricing and a switch to Bland's rule
on long degenerate runs. Float tableaus are rebuilt from the original rows
every few pivots and before any termination is accepted. With
``exact=True`` everything runs over :class:`fractions.Fraction` (object
arrays), which is only meant for small instances.

Certificates:

* Optimal: primal point and row duals (Lagrange multipliers of the original
  rows, sign convention ``c - A^T y`` is the reduced-cost vector).
* Infeasible: a Farkas vector ``y`` on the standard-form rows with
  ``A_std^T y <= 0`` and ``b_std^T y > 0``.
* Unbounded: an improving ray in the original variables.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import NumericalFailure

PIVOT_TOL = 1e-10
DEGENERATE_RUN = 50
REFACTOR_EVERY = 40
FEAS_TOL = 1e-8
COST_TOL = 1e-9


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """``sense`` c.x subject to ``A x (relations) b`` and ``lower <= x <= upper``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    relations: list
    sense: str = "min"
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=object if _is_exact(self.c) else float).reshape(-1)
        n = self.c.shape[0]
        exact = _is_exact(self.A) or _is_exact(self.b) or _is_exact(self.c)
        dt = object if exact else float
        self.A = np.asarray(self.A, dtype=dt).reshape(-1, n) if n else np.zeros((len(self.b), 0))
        self.b = np.asarray(self.b, dtype=dt).reshape(-1)
        self.relations = list(self.relations)
        if self.A.shape[0] != self.b.shape[0] or len(self.relations) != self.b.shape[0]:
            raise ValueError("row count mismatch between A, b and relations")
        for r in self.relations:
            if r not in ("<=", "=", ">="):
                raise ValueError(f"unknown relation {r!r}")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(n)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(n)
        if not exact:
            if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
                raise ValueError("LP coefficients must be finite")

    @property
    def n_vars(self):
        return self.c.shape[0]

    @property
    def n_rows(self):
        return self.b.shape[0]

    def residuals(self, x):
        """Largest violation of any row or bound at ``x``, rows scaled to unit max coefficient."""
        x = np.asarray(x, dtype=float)
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        scale = np.maximum(np.abs(A).max(axis=1, initial=0.0), 1e-300)
        scale = np.where(scale > 0, scale, 1.0)
        lhs = (A @ x - b) / scale
        worst = 0.0
        for r, v in zip(self.relations, lhs):
            if r == "<=":
                worst = max(worst, v)
            elif r == ">=":
                worst = max(worst, -v)
            else:
                worst = max(worst, abs(v))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        return worst


@dataclass
class LpOutcome:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float | None = None
    farkas: np.ndarray | None = None
    ray: np.ndarray | None = None
    iterations: int = 0
    standard: tuple = field(default=None, repr=False)

    @property
    def feasible(self):
        return self.status is not Status.INFEASIBLE


def _is_exact(a):
    arr = np.asarray(a, dtype=object) if not isinstance(a, np.ndarray) else a
    if arr.dtype != object:
        return False
    return any(isinstance(v, Fraction) for v in arr.flat)


class _Standard:
    """Standard-form rewrite: ``x = offset + M z`` with ``z >= 0``."""

    def __init__(self, lp: LinearProgram, exact: bool):
        n = lp.n_vars
        conv = (lambda v: Fraction(v) if not isinstance(v, Fraction) else v) if exact else float
        cols = []          # (original index, sign)
        offset = [conv(0)] * n
        bound_rows = []    # (z index, bound)
        for j in range(n):
            lo, up = lp.lower[j], lp.upper[j]
            if np.isfinite(lo):
                offset[j] = conv(lo)
                cols.append((j, 1))
                if np.isfinite(up):
                    bound_rows.append((len(cols) - 1, conv(up) - conv(lo)))
            elif np.isfinite(up):
                offset[j] = conv(up)
                cols.append((j, -1))
            else:
                cols.append((j, 1))
                cols.append((j, -1))
        self.cols = cols
        self.offset = np.array(offset, dtype=object if exact else float)
        nz = len(cols)
        dt = object if exact else float
        A = np.array([[conv(v) for v in row] for row in lp.A], dtype=dt).reshape(lp.n_rows, n)
        b = np.array([conv(v) for v in lp.b], dtype=dt)
        c = np.array([conv(v) for v in lp.c], dtype=dt)
        M = np.zeros((n, nz), dtype=dt)
        if exact:
            M[:] = Fraction(0)
        for k, (j, s) in enumerate(cols):
            M[j, k] = conv(s)
        rows_A = A @ M if n else np.zeros((lp.n_rows, nz), dtype=dt)
        rows_b = b - (A @ self.offset if n else 0)
        rels = list(lp.relations)
        if bound_rows:
            extra = np.zeros((len(bound_rows), nz), dtype=dt)
            if exact:
                extra[:] = Fraction(0)
            for r, (k, ub) in enumerate(bound_rows):
                extra[r, k] = conv(1)
            rows_A = np.vstack([rows_A, extra])
            rows_b = np.concatenate([rows_b, np.array([ub for _, ub in bound_rows], dtype=dt)])
            rels += ["<="] * len(bound_rows)
        self.n_orig_rows = lp.n_rows
        m = rows_A.shape[0]
        # row scaling (float only) then slack columns and sign normalization
        scale = np.ones(m, dtype=dt) if not exact else np.array([Fraction(1)] * m, dtype=object)
        if not exact and m:
            mx = np.abs(rows_A).max(axis=1, initial=0.0)
            scale = np.where(mx > 0, mx, 1.0)
            rows_A = rows_A / scale[:, None]
            rows_b = rows_b / scale
        n_slack = sum(1 for r in rels if r != "=")
        S = np.zeros((m, n_slack), dtype=dt)
        if exact:
            S[:] = Fraction(0)
        slack_of_row = [-1] * m
        k = 0
        for i, r in enumerate(rels):
            if r == "<=":
                S[i, k] = conv(1)
                slack_of_row[i] = k
                k += 1
            elif r == ">=":
                S[i, k] = conv(-1)
                slack_of_row[i] = k
                k += 1
        full = np.hstack([rows_A, S]) if m else np.zeros((0, nz + n_slack), dtype=dt)
        # negate rows with b < 0, and ">=" rows with b == 0 so their slack starts basic
        flip = np.array([conv(-1) if (v < 0 or (v == 0 and r == ">=")) else conv(1)
                         for v, r in zip(rows_b, rels)], dtype=dt)
        full = full * flip[:, None] if m else full
        rows_b = rows_b * flip if m else rows_b
        self.A = full
        self.b = rows_b
        self.flip = flip
        self.scale = scale
        self.nz = nz
        self.n_slack = n_slack
        self.slack_of_row = slack_of_row
        cost = M.T @ c if n else np.zeros(nz, dtype=dt)
        if lp.sense == "max":
            cost = -cost
        zero = Fraction(0) if exact else 0.0
        self.cost = np.concatenate([cost, np.array([zero] * n_slack, dtype=dt)])
        self.M = M
        self.exact = exact
        self.sense = lp.sense

    def to_original(self, z):
        return self.offset + self.M @ z[: self.nz]

    def row_duals_to_original(self, y):
        """Map multipliers of the standard rows back to the original rows."""
        y = y * self.flip / self.scale
        if self.sense == "max":
            y = -y
        return y[: self.n_orig_rows]


def _refactor(T, basis, origin):
    """Rebuild a float tableau from the original rows and the current basis."""
    A0, b0, cost = origin
    m = A0.shape[0]
    try:
        body = np.linalg.solve(A0[:, basis], np.column_stack([A0, b0]))
    except np.linalg.LinAlgError:
        return False
    body[np.abs(body) < 1e-13] = 0.0
    body[:, -1] = np.maximum(body[:, -1], 0.0)
    cb = cost[basis]
    T[:m] = body
    T[m, :-1] = cost - cb @ body[:, :-1]
    T[m, -1] = -(cb @ body[:, -1])
    for i, j in enumerate(basis):
        T[:m, j] = 0.0
        T[i, j] = 1.0
        T[m, j] = 0.0
    return True


def _run_simplex(T, basis, allowed, exact, max_iter, counter, origin=None):
    """Primal simplex iterations on tableau T (last row = reduced costs).

    Pricing is Dantzig (most negative reduced cost) and switches to Bland's
    lowest-index rule after ``DEGENERATE_RUN`` consecutive degenerate pivots,
    which rules out cycling. Among tied ratios the largest pivot wins under
    Dantzig pricing and the lowest basic index under Bland's rule.
    """
    m = T.shape[0] - 1
    ncol = T.shape[1] - 1
    cost_tol = 0 if exact else COST_TOL
    piv_tol = 0 if exact else PIVOT_TOL
    tie = 0 if exact else 1e-12
    pivot = _kernels.pivot_numpy if exact else _kernels.pivot
    mask = np.asarray(allowed, dtype=bool)
    refresh = origin is not None and not exact
    degenerate = 0
    since = 0
    while True:
        if counter[0] >= max_iter:
            raise NumericalFailure(f"simplex exceeded its pivot budget ({max_iter})")
        if refresh and since >= REFACTOR_EVERY:
            _refactor(T, basis, origin)
            since = 0
        bland = degenerate >= DEGENERATE_RUN
        red = T[m, :ncol]
        cand = np.flatnonzero(mask & np.asarray(red < -cost_tol, dtype=bool))
        if cand.size == 0:
            if since and refresh and _refactor(T, basis, origin):
                since = 0
                continue
            return None
        if bland:
            entering = int(cand[0])
        else:
            entering = int(cand[np.argmin(red[cand])])
        col = T[:m, entering]
        rhs = T[:m, ncol]
        leave = -1
        best = None
        for i in range(m):
            if col[i] > piv_tol:
                ratio = rhs[i] / col[i]
                if leave < 0 or ratio < best - tie:
                    best, leave = ratio, i
                elif ratio <= best + tie:
                    if bland:
                        better = basis[i] < basis[leave]
                    else:
                        better = col[i] > col[leave]
                    if better:
                        best, leave = min(best, ratio), i
        if leave < 0:
            if since and refresh and _refactor(T, basis, origin):
                since = 0
                continue
            return entering
        degenerate = degenerate + 1 if best <= tie else 0
        pivot(T, leave, entering)
        basis[leave] = entering
        if not exact:
            neg = T[:m, ncol] < 0
            T[:m, ncol][neg] = 0.0
        counter[0] += 1
        since += 1


def solve(lp: LinearProgram, exact: bool = False, max_iter: int | None = None,
          phase_one_only: bool = False) -> LpOutcome:
    """Solve ``lp``; see the module docstring for the certificates returned."""
    std = _Standard(lp, exact)
    m, nstd = std.A.shape
    dt = object if exact else float
    zero = Fraction(0) if exact else 0.0
    one = Fraction(1) if exact else 1.0
    if max_iter is None:
        max_iter = 50 * (m + nstd) + 1000

    # unit columns: slacks with +1 after the sign flip, artificials elsewhere
    unit_col = [-1] * m
    art_rows = []
    for i in range(m):
        k = std.slack_of_row[i]
        if k >= 0 and std.A[i, std.nz + k] == one:
            unit_col[i] = std.nz + k
        else:
            art_rows.append(i)
    n_art = len(art_rows)
    ncol = nstd + n_art
    T = np.empty((m + 1, ncol + 1), dtype=dt)
    T[:] = zero
    T[:m, :nstd] = std.A
    for a, i in enumerate(art_rows):
        T[i, nstd + a] = one
        unit_col[i] = nstd + a
    T[:m, ncol] = std.b
    basis = list(unit_col)
    is_art = np.zeros(ncol, dtype=bool)
    is_art[nstd:] = True

    # phase one: minimize the sum of artificials
    phase1_cost = np.array([zero] * ncol, dtype=dt)
    phase1_cost[nstd:] = one
    T[m, :ncol] = phase1_cost
    T[m, ncol] = zero
    for i in art_rows:
        T[m] = T[m] - T[i]
    counter = [0]
    allowed = np.ones(ncol, dtype=bool)
    A0 = T[:m, :ncol].copy()
    b0 = T[:m, ncol].copy()
    _run_simplex(T, basis, allowed, exact, max_iter, counter, (A0, b0, phase1_cost))
    w = -T[m, ncol]
    feas_tol = 0 if exact else FEAS_TOL
    if w > feas_tol:
        y = np.array([phase1_cost[unit_col[i]] - T[m, unit_col[i]] for i in range(m)], dtype=dt)
        return LpOutcome(Status.INFEASIBLE, farkas=y, iterations=counter[0],
                         standard=(std.A, std.b))

    # drive artificials out of the basis where possible
    piv_tol = 0 if exact else PIVOT_TOL
    pivot = _kernels.pivot_numpy if exact else _kernels.pivot
    for i in range(m):
        if is_art[basis[i]]:
            for j in range(nstd):
                if abs(T[i, j]) > piv_tol:
                    pivot(T, i, j)
                    basis[i] = j
                    counter[0] += 1
                    break
    if not exact:
        T[:m, ncol] = np.maximum(T[:m, ncol], 0.0)

    if phase_one_only:
        z = np.array([zero] * ncol, dtype=dt)
        for i, j in enumerate(basis):
            z[j] = T[i, ncol]
        x = std.to_original(z[:nstd])
        return LpOutcome(Status.OPTIMAL, x=_out(x, exact), iterations=counter[0],
                         standard=(std.A, std.b))

    # phase two
    cost = np.concatenate([std.cost, np.array([zero] * n_art, dtype=dt)])
    cb = np.array([cost[j] for j in basis], dtype=dt)
    T[m, :ncol] = cost - cb @ T[:m, :ncol] if m else cost
    T[m, ncol] = -(cb @ T[:m, ncol]) if m else zero
    allowed = ~is_art
    entering = _run_simplex(T, basis, allowed, exact, max_iter, counter, (A0, b0, cost))
    if entering is not None:
        dz = np.array([zero] * ncol, dtype=dt)
        dz[entering] = one
        for i, j in enumerate(basis):
            dz[j] = -T[i, entering]
        ray = std.M @ dz[: std.nz]
        return LpOutcome(Status.UNBOUNDED, ray=_out(ray, exact), iterations=counter[0],
                         standard=(std.A, std.b))
    z = np.array([zero] * ncol, dtype=dt)
    for i, j in enumerate(basis):
        z[j] = T[i, ncol]
    x = std.to_original(z[:nstd])
    y_std = np.array([cost[unit_col[i]] - T[m, unit_col[i]] for i in range(m)], dtype=dt)
    duals = std.row_duals_to_original(y_std)
    if exact:
        obj = sum((ci if isinstance(ci, Fraction) else Fraction(float(ci))) * xi for ci, xi in zip(lp.c, x))
    else:
        obj = lp.c @ x if lp.n_vars else zero
    return LpOutcome(Status.OPTIMAL, x=_out(x, exact), duals=_out(duals, exact),
                     objective=obj if exact else float(obj), iterations=counter[0],
                     standard=(std.A, std.b))


def _out(v, exact):
    return np.array(v, dtype=object) if exact else np.asarray(v, dtype=float)


def check_feasible(lp: LinearProgram, exact: bool = False):
    """Phase-one only. Returns ``(feasible, certificate)``.

    The certificate is a feasible point in the original variables, or the
    Farkas vector on the standard-form rows when infeasible.
    """
    out = solve(lp, exact=exact, phase_one_only=True)
    if out.status is Status.INFEASIBLE:
        return False, out.farkas
    return True, out.x


def farkas_residual(outcome: LpOutcome):
    """Return (max positive entry of A^T y, b^T y) for an infeasibility certificate."""
    A, b = outcome.standard
    y = outcome.farkas
    if A.dtype == object:
        return max(list(A.T @ y), default=Fraction(0)), b @ y
    return float(np.max(A.T @ y, initial=0.0)), float(b @ y)


def exact_vertex(A, b, support):
    """Solve ``A[:, support] z = b`` exactly over the rationals.

    ``A`` and ``b`` hold Fractions. Returns the basic solution (free columns at
    zero) as a list of Fractions over ``support``, or ``None`` when the system
    is inconsistent.
    """
    rows = [list(A[i, j] for j in support) + [b[i]] for i in range(len(b))]
    ncol = len(support)
    piv_cols = []
    r = 0
    for c in range(ncol):
        p = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [v * inv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * bb for a, bb in zip(rows[i], rows[r])]
        piv_cols.append(c)
        r += 1
        if r == len(rows):
            break
    for i in range(r, len(rows)):
        if rows[i][ncol] != 0:
            return None
    z = [Fraction(0)] * ncol
    for i, c in enumerate(piv_cols):
        z[c] = rows[i][ncol]
    return z
