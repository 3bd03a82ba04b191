"""Seeded Monte Carlo checks of convex concentration inequalities.

A terminal variable is built from piecewise-constant deterministic integrands

    F = sum_k A_k (W(t_{k+1}) - W(t_k)) + sum_k J_k (Z_k - lambda_k dt_k),

with W a Brownian motion and Z_k a vector of independent Poisson counts with
means ``lambda_k dt_k``; each interval is simulated exactly. Comparisons of
E[phi(F)] and E[phi(G)] over a battery of convex test functions use
independent driver streams for F and G.

Random numbers come from Philox generators keyed by
``(seed, stream, block)``, where blocks are fixed-size groups of paths; the
sample matrix is therefore bit-identical for any number of worker threads.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _config, _kernels
from .errors import BadSpec, GridMismatch, NotPsd
from .measures import DiscreteMeasure
from .order import Relation, check_order
from .psd import is_psd, min_eigenvalue, psd_leq, sqrt_psd, trace_inner

BLOCK_SIZE = 8192
Z_VIOLATION = 4.0
Z_CONSISTENT = 1.0
GRID_TOL = 1e-12
F_STREAM, G_STREAM = 0, 1


# -- strategies -----------------------------------------------------------------------

@dataclass
class StrategySpec:
    """Piecewise-constant integrands on ``grid``; interval k is [grid[k], grid[k+1])."""

    grid: np.ndarray
    A: list
    J: list
    lam: list

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float).reshape(-1)
        m = self.grid.size - 1
        if m < 1:
            raise BadSpec("time grid needs at least two points")
        if self.grid[0] != 0.0 or np.any(np.diff(self.grid) <= 0):
            raise BadSpec("time grid must start at 0 and be strictly increasing")
        if not (len(self.A) == len(self.J) == len(self.lam) == m):
            raise BadSpec(f"expected {m} per-interval entries for A, J and lambda")
        self.A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A]
        self.J = [np.asarray(j, dtype=float) for j in self.J]
        self.lam = [np.asarray(v, dtype=float).reshape(-1) for v in self.lam]
        d = self.A[0].shape[0]
        for k in range(m):
            if self.J[k].size == 0:
                self.J[k] = np.zeros((d, 0))
            self.J[k] = self.J[k].reshape(d, -1) if self.J[k].ndim < 2 else self.J[k]
            if self.A[k].shape[0] != d or self.J[k].shape[0] != d:
                raise BadSpec(f"interval {k}: A and J must have {d} rows")
            if self.lam[k].size != self.J[k].shape[1]:
                raise BadSpec(f"interval {k}: lambda needs one rate per column of J")
            if np.any(self.lam[k] < 0) or not np.all(np.isfinite(self.lam[k])):
                raise BadSpec(f"interval {k}: intensities must be finite and nonnegative")
            if not (np.all(np.isfinite(self.A[k])) and np.all(np.isfinite(self.J[k]))):
                raise BadSpec(f"interval {k}: coefficients must be finite")

    @property
    def dimension(self):
        return self.A[0].shape[0]

    @property
    def horizon(self):
        return float(self.grid[-1])

    def covariance_rate(self, k):
        return self.A[k] @ self.A[k].T

    def jump_measure(self, k) -> DiscreteMeasure:
        """Intensity-weighted atoms at the nonzero columns of J_k."""
        J, lam = self.J[k], self.lam[k]
        keep = (lam > 0) & np.any(J != 0, axis=0)
        return DiscreteMeasure(self.dimension, J[:, keep].T, lam[keep])

    def refined(self, grid) -> "StrategySpec":
        grid = np.asarray(grid, dtype=float)
        idx = np.searchsorted(self.grid, grid[:-1], side="right") - 1
        return StrategySpec(grid, [self.A[i] for i in idx], [self.J[i] for i in idx],
                            [self.lam[i] for i in idx])

    def to_dict(self):
        return {"grid": self.grid.tolist(), "A": [a.tolist() for a in self.A],
                "J": [j.tolist() for j in self.J], "lambda": [v.tolist() for v in self.lam]}


@dataclass
class PoissonMeasureSpec:
    """Diffusion part plus a Poisson random measure with atomic intensity.

    ``marks`` are the atoms x_i of the intensity measure with ``rates`` s_i, and
    ``jump[k][:, i]`` is the jump J_{t,x_i} on interval k. Each mark drives an
    independent Poisson process of rate s_i, so it reduces exactly to a
    :class:`StrategySpec` with one jump column per mark.
    """

    grid: np.ndarray
    A: list
    marks: np.ndarray
    rates: np.ndarray
    jump: list

    def __post_init__(self):
        self.marks = np.asarray(self.marks, dtype=float)
        self.marks = self.marks.reshape(len(self.marks), -1)
        self.rates = np.asarray(self.rates, dtype=float).reshape(-1)
        if self.rates.size != self.marks.shape[0]:
            raise BadSpec("one rate per mark is required")
        if np.any(self.rates < 0):
            raise BadSpec("mark rates must be nonnegative")
        self._strategy = StrategySpec(self.grid, self.A, self.jump,
                                      [self.rates] * (len(np.asarray(self.grid)) - 1))
        self.grid = self._strategy.grid

    @classmethod
    def from_function(cls, grid, A, marks, rates, fn: Callable):
        """Evaluate ``fn(t, x) -> R^d`` at the left end of each interval and each mark."""
        grid = np.asarray(grid, dtype=float)
        marks = np.asarray(marks, dtype=float).reshape(len(marks), -1)
        jump = [np.column_stack([np.asarray(fn(t, x), dtype=float).reshape(-1) for x in marks])
                for t in grid[:-1]]
        return cls(grid, A, marks, rates, jump)

    def as_strategy(self) -> StrategySpec:
        return self._strategy

    @property
    def dimension(self):
        return self._strategy.dimension


def as_strategy(spec) -> StrategySpec:
    if isinstance(spec, StrategySpec):
        return spec
    if isinstance(spec, PoissonMeasureSpec):
        return spec.as_strategy()
    raise BadSpec(f"unsupported spec type {type(spec).__name__}")


def common_grid(f: StrategySpec, g: StrategySpec):
    if abs(f.horizon - g.horizon) > GRID_TOL * max(1.0, f.horizon):
        raise GridMismatch(f"horizons differ: {f.horizon} vs {g.horizon}")
    merged = np.union1d(f.grid, g.grid)
    keep = np.concatenate([[True], np.diff(merged) > GRID_TOL])
    merged = merged[keep]
    merged[-1] = f.horizon
    return merged


# -- simulation ----------------------------------------------------------------------

def block_generator(seed, stream, block):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def _simulate_block(spec: StrategySpec, n, rng):
    out = np.zeros((n, spec.dimension))
    for k, dt in enumerate(np.diff(spec.grid)):
        A, J = spec.A[k], spec.J[k]
        z = rng.standard_normal((n, A.shape[1])) * math.sqrt(dt)
        mean = spec.lam[k] * dt
        counts = rng.poisson(mean, size=(n, J.shape[1])).astype(float)
        _kernels.accumulate(out, z, np.ascontiguousarray(A), counts, mean, np.ascontiguousarray(J))
    return out


def simulate_terminal(spec, n_paths, seed, stream=F_STREAM, block_size=BLOCK_SIZE, workers=None):
    """Sample matrix (n_paths x d) of the terminal value of ``spec``."""
    spec = as_strategy(spec)
    n_paths = int(n_paths)
    if n_paths <= 0:
        raise BadSpec("n_paths must be positive")
    starts = list(range(0, n_paths, block_size))
    out = np.empty((n_paths, spec.dimension))

    def run(b):
        lo = starts[b]
        hi = min(lo + block_size, n_paths)
        out[lo:hi] = _simulate_block(spec, hi - lo, block_generator(seed, stream, b))

    workers = _config.worker_count() if workers is None else max(1, int(workers))
    if workers == 1 or len(starts) == 1:
        for b in range(len(starts)):
            run(b)
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(starts))) as pool:
            list(pool.map(run, range(len(starts))))
    return out


# -- test functions ------------------------------------------------------------------

@dataclass
class TestFunction:
    name: str
    fn: Callable
    nondecreasing: bool = False

    def __call__(self, x):
        return self.fn(np.atleast_2d(np.asarray(x, dtype=float)))


TestFunction.__test__ = False  # not a pytest class


def _tempered_exp(lam, radius):
    top = math.exp(lam * radius)

    def h(s):
        s = np.asarray(s, dtype=float)
        inner = np.exp(lam * np.minimum(s, radius))
        return np.where(s <= radius, inner, top * (1.0 + lam * (s - radius)))
    return h


def convex_battery(d, scale=1.0, seed=0, nondecreasing_only=False):
    """Finite family of convex test functions on R^d.

    Coordinate hinges in both directions, the norm and squared norm, hinges
    along random directions, exponentials of the norm continued linearly
    beyond a radius (so their mean exists for every sample), and random
    psd quadratics. ``scale`` sets the hinge offsets and the exponential
    rates; ``nondecreasing_only`` keeps the componentwise nondecreasing ones.
    """
    s = float(scale) if scale > 0 else 1.0
    rng = np.random.default_rng(seed)
    out = []
    for i in range(d):
        for c in (-s, 0.0, s):
            out.append(TestFunction(f"max(0,x{i}{-c:+.3g})", lambda x, i=i, c=c: np.maximum(x[:, i] - c, 0.0), True))
            out.append(TestFunction(f"max(0,-x{i}{-c:+.3g})", lambda x, i=i, c=c: np.maximum(-x[:, i] - c, 0.0)))
    out.append(TestFunction("norm", lambda x: np.linalg.norm(x, axis=1)))
    out.append(TestFunction("norm^2", lambda x: np.einsum("ij,ij->i", x, x)))
    for r in range(4):
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        c = s * r / 2
        out.append(TestFunction(f"dir-hinge{r}(c={c:.3g})", lambda x, u=u, c=c: np.maximum(x @ u - c, 0.0)))
        v = np.abs(u)
        out.append(TestFunction(f"pos-dir-hinge{r}(c={c:.3g})", lambda x, v=v, c=c: np.maximum(x @ v - c, 0.0), True))
    for lam in (0.5 / s, 1.0 / s):
        h = _tempered_exp(lam, 4.0 * s)
        out.append(TestFunction(f"exp-norm(l={lam:.3g})", lambda x, h=h: h(np.linalg.norm(x, axis=1))))
        out.append(TestFunction(f"exp-pos-sum(l={lam:.3g})",
                                lambda x, h=h: h(np.sum(np.maximum(x, 0.0), axis=1)), True))
    for r in range(3):
        B = rng.standard_normal((d, d))
        Q = B @ B.T / d
        out.append(TestFunction(f"quad{r}", lambda x, Q=Q: np.einsum("ij,jk,ik->i", x, Q, x)))
    if nondecreasing_only:
        out = [f for f in out if f.nondecreasing]
    return out


# -- hypotheses ----------------------------------------------------------------------

@dataclass
class IntervalCheck:
    t0: float
    t1: float
    psd_ok: bool
    min_eigenvalue: float
    jump_ok: bool
    jump_relation: str
    detail: str = ""

    @property
    def ok(self):
        return self.psd_ok and self.jump_ok


@dataclass
class HypothesisReport:
    relation: str
    intervals: list

    @property
    def ok(self):
        return all(r.ok for r in self.intervals)

    def to_dict(self):
        return {"relation": self.relation, "ok": self.ok,
                "intervals": [dict(vars(r), ok=r.ok) for r in self.intervals]}


def verify_hypotheses(f, g, relation="cxp") -> HypothesisReport:
    """Per-interval comparison of covariance rates and jump measures.

    On the common refinement of both grids, checks A_k A_k^T <= Ahat_k Ahat_k^T
    in the psd order and orders the jump measures under ``relation``; for
    cxpi, every jump column of both specs must also be nonnegative.
    """
    f, g = as_strategy(f), as_strategy(g)
    rel = Relation.parse(relation)
    if f.dimension != g.dimension:
        raise BadSpec(f"F has dimension {f.dimension}, G has {g.dimension}")
    grid = common_grid(f, g)
    f, g = f.refined(grid), g.refined(grid)
    rows = []
    for k in range(len(grid) - 1):
        H, Hs = f.covariance_rate(k), g.covariance_rate(k)
        gap = min_eigenvalue(Hs - H)
        psd_ok = psd_leq(H, Hs)
        nu, nus = f.jump_measure(k), g.jump_measure(k)
        detail = ""
        if rel is Relation.CXPI and (np.any(f.J[k] < 0) or np.any(g.J[k] < 0)):
            jump_ok, detail = False, "negative jump coefficient"
        else:
            jump_ok = check_order(nu, nus, rel).ordered
            if not jump_ok:
                detail = f"jump measures not {rel.value}-ordered"
        if not psd_ok:
            detail = "; ".join(filter(None, [f"covariance gap has eigenvalue {gap:.3g}", detail]))
        rows.append(IntervalCheck(float(grid[k]), float(grid[k + 1]), bool(psd_ok), float(gap),
                                  bool(jump_ok), rel.value, detail))
    return HypothesisReport(rel.value, rows)


# -- comparison ----------------------------------------------------------------------

@dataclass
class CompareRow:
    name: str
    mean_F: float
    mean_G: float
    se_F: float
    se_G: float
    decision: str

    @property
    def z(self):
        se = self.se_F + self.se_G
        diff = self.mean_F - self.mean_G
        return diff / se if se > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))


@dataclass
class CompareReport:
    rows: list
    n_paths: int
    seed: int
    relation: str
    hypotheses: HypothesisReport | None = None
    forced: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def violations(self):
        return [r for r in self.rows if r.decision == "violation"]

    def to_dict(self):
        return {
            "n_paths": self.n_paths, "seed": self.seed, "relation": self.relation,
            "forced": self.forced,
            "hypotheses": None if self.hypotheses is None else self.hypotheses.to_dict(),
            "rows": [dict(vars(r), z=r.z) for r in self.rows],
            "violations": len(self.violations),
            **self.extra,
        }

    def table(self):
        head = f"{'function':<28}{'E[phi(F)]':>14}{'E[phi(G)]':>14}{'z':>9}  decision"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(f"{r.name:<28}{r.mean_F:>14.6g}{r.mean_G:>14.6g}{r.z:>9.2f}  {r.decision}")
        return "\n".join(lines)


def decide(mean_F, mean_G, se_F, se_G):
    diff = mean_F - mean_G
    se = se_F + se_G
    if diff > Z_VIOLATION * se and diff > 1e-12 * max(1.0, abs(mean_G)):
        return "violation"
    if diff <= Z_CONSISTENT * se:
        return "consistent"
    return "inconclusive"


def compare_samples(F, G, battery) -> list:
    rows = []
    for phi in battery:
        a, b = phi(F), phi(G)
        se_a = float(np.std(a, ddof=1) / math.sqrt(len(a))) if len(a) > 1 else 0.0
        se_b = float(np.std(b, ddof=1) / math.sqrt(len(b))) if len(b) > 1 else 0.0
        ma, mb = float(np.mean(a)), float(np.mean(b))
        rows.append(CompareRow(phi.name, ma, mb, se_a, se_b, decide(ma, mb, se_a, se_b)))
    return rows


def compare(f_spec, g_spec, relation="cxp", n_paths=100_000, seed=0, force=False,
            battery=None, workers=None) -> CompareReport:
    """Estimate E[phi(F)] and E[phi(G)] over a convex battery and flag 4-sigma violations.

    Raises :class:`BadSpec` when the hypotheses fail and ``force`` is false.
    The battery holds general convex functions for every relation, since the
    inequality is asserted for all convex phi under either jump condition.
    """
    f, g = as_strategy(f_spec), as_strategy(g_spec)
    hyp = verify_hypotheses(f, g, relation)
    if not hyp.ok and not force:
        bad = [f"[{r.t0:g}, {r.t1:g}): {r.detail}" for r in hyp.intervals if not r.ok]
        raise BadSpec("hypotheses fail (" + "; ".join(bad) + "); pass force=True to compare anyway")
    F = simulate_terminal(f, n_paths, seed, F_STREAM, workers=workers)
    G = simulate_terminal(g, n_paths, seed, G_STREAM, workers=workers)
    if battery is None:
        scale = float(np.sqrt(np.mean(np.sum(G ** 2, axis=1)))) or 1.0
        battery = convex_battery(f.dimension, scale / math.sqrt(f.dimension), seed)
    return CompareReport(compare_samples(F, G, battery), int(n_paths), int(seed),
                         Relation.parse(relation).value, hyp, bool(force and not hyp.ok))


def gaussian_exact(Sigma, SigmaTilde, Q):
    """(Tr(Q Sigma), Tr(Q SigmaTilde), Tr(Q Sigma) <= Tr(Q SigmaTilde)) without sampling."""
    for name, M in (("Sigma", Sigma), ("SigmaTilde", SigmaTilde), ("Q", Q)):
        if not is_psd(M):
            raise NotPsd(f"{name} is not positive semidefinite")
    a, b = trace_inner(Q, Sigma), trace_inner(Q, SigmaTilde)
    return a, b, bool(a <= b + 1e-12 * max(1.0, abs(b)))


def gaussian_spec(Sigma, horizon=1.0) -> StrategySpec:
    """Constant diffusion A = sqrt(Sigma / T) on [0, T], so F ~ N(0, Sigma)."""
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    A = sqrt_psd(Sigma / horizon)
    d = A.shape[0]
    return StrategySpec([0.0, horizon], [A], [np.zeros((d, 0))], [np.zeros(0)])


# -- deviation bound -----------------------------------------------------------------

@dataclass
class DeviationRow:
    x: float
    bound: float
    lam: float
    tail_F: float | None = None
    se_tail: float | None = None

    @property
    def ok(self):
        if self.tail_F is None:
            return True
        return self.bound >= self.tail_F - Z_VIOLATION * self.se_tail


def default_lambda_grid():
    return np.linspace(0.05, 5.0, 100)


def deviation_bound(g_samples, x_grid, lambda_grid=None, f_samples=None) -> list:
    """Laplace-transform tail bound P(|F| >= x) <= min_lambda E[exp(lambda (|G| - x))].

    The expectation is the sample mean over ``g_samples``, evaluated in log
    space; bounds are clipped to [0, 1]. With ``f_samples`` each row also
    carries the empirical tail of |F| and its standard error.
    """
    G = np.asarray(g_samples, dtype=float)
    if G.size == 0:
        raise BadSpec("deviation bound needs at least one sample")
    norms = np.linalg.norm(G.reshape(len(G), -1), axis=1)
    lams = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if lams.size == 0 or np.any(lams <= 0):
        raise BadSpec("lambda grid must be nonempty and positive")
    # log mean exp(lambda |G|) per lambda
    t = lams[:, None] * norms[None, :]
    top = t.max(axis=1)
    log_mgf = top + np.log(np.mean(np.exp(t - top[:, None]), axis=1))
    fn = None if f_samples is None else np.linalg.norm(np.asarray(f_samples, dtype=float).reshape(len(f_samples), -1), axis=1)
    rows = []
    for x in np.asarray(x_grid, dtype=float).reshape(-1):
        logs = log_mgf - lams * x
        i = int(np.argmin(logs))
        bound = float(np.clip(np.exp(min(logs[i], 0.0)), 0.0, 1.0))
        row = DeviationRow(float(x), bound, float(lams[i]))
        if fn is not None:
            p = float(np.mean(fn >= x))
            row.tail_F, row.se_tail = p, math.sqrt(p * (1 - p) / len(fn))
        rows.append(row)
    return rows


# -- scenario files ------------------------------------------------------------------

def spec_from_dict(data, grid):
    """Build a spec from its JSON form; ``"marks"`` selects a Poisson random measure."""
    grid = np.asarray(data.get("grid", grid), dtype=float)
    m = len(grid) - 1
    try:
        if "marks" in data:
            A = data.get("A")
            jump = data["jump"]
            d = len(jump[0])
            A = [np.zeros((d, 0))] * m if A is None else A
            return PoissonMeasureSpec(grid, A, data["marks"], data["rates"], jump)
        A, J, lam = data.get("A"), data.get("J"), data.get("lambda")
        if A is None and J is None:
            raise BadSpec("spec needs A or J")
        d = len(A[0]) if A is not None else len(J[0])
        A = [np.zeros((d, 0))] * m if A is None else A
        J = [np.zeros((d, 0))] * m if J is None else J
        lam = [np.zeros(0)] * m if lam is None else lam
        return StrategySpec(grid, A, J, lam)
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise BadSpec(f"malformed spec: {exc}") from None


@dataclass
class Scenario:
    F: object
    G: object
    relation: str = "cxp"
    name: str = ""


def scenario_from_dict(data) -> Scenario:
    if not isinstance(data, dict) or "F" not in data or "G" not in data:
        raise BadSpec('scenario needs "F" and "G" entries')
    horizon = data.get("horizon")
    grid = data.get("grid", [0.0, horizon] if horizon is not None else None)
    if grid is None:
        raise BadSpec('scenario needs "grid" or "horizon"')
    grid = np.asarray(grid, dtype=float)
    if horizon is not None and abs(grid[-1] - float(horizon)) > GRID_TOL * max(1.0, float(horizon)):
        raise BadSpec(f"grid ends at {grid[-1]} but horizon is {horizon}")
    try:
        rel = Relation.parse(data.get("relation", "cxp")).value
    except ValueError as exc:
        raise BadSpec(str(exc)) from None
    return Scenario(spec_from_dict(data["F"], grid), spec_from_dict(data["G"], grid), rel,
                    data.get("name", ""))


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
