"""Acceptance criteria, each printing one PASS/FAIL line to the terminal."""
import time

import numpy as np
import pytest

from convex_order.geometry import cx_set, find_witness, support_hull, vertex_distance
from convex_order.instances import random_pair, to_orthant
from convex_order.measures import total_mass
from convex_order.order import (Relation, build_coupling, build_kernel_iterative, check_order,
                                exact_coupling, exact_separator, find_separator,
                                kernel_barycenter_residuals, kernel_transport_error)
from convex_order.sim import (F_STREAM, G_STREAM, PoissonMeasureSpec, StrategySpec, compare,
                              deviation_bound, gaussian_exact, gaussian_spec, simulate_terminal)

N_INSTANCES = 500
N_PATHS = 100_000


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def suite():
    """The seeded random instance suite shared by criteria 3 to 5."""
    out = []
    for seed in range(N_INSTANCES):
        mu, nu, mode = random_pair(seed)
        out.append((seed, mode, mu, nu))
    return out


def test_criterion_1_square(report, square_pair):
    t0 = time.perf_counter()
    mu, nu = square_pair
    ordered = check_order(mu, nu, "cx").ordered
    err = vertex_distance(cx_set(mu, nu, [-1, 0]).vertices, [[-1, -1], [-1, 1]])
    w = find_witness(mu, nu, [-1, 0])
    pts = {tuple(p): a for p, a in zip(w.points, w.weights)}
    wit_ok = set(pts) == {(-1.0, 1.0), (-1.0, -1.0)} and all(abs(a - 0.5) <= 1e-8 for a in pts.values())
    dt = time.perf_counter() - t0
    ok = ordered and err <= 1e-6 and wit_ok and dt < 1.0
    assert report(1, ok, f"ordered={ordered}, C_x vertex error {err:.1e}, witness {wit_ok}, {dt:.3f}s")


def test_criterion_2_triangle(report, triangle_pair):
    t0 = time.perf_counter()
    mu, nu = triangle_pair
    ordered = check_order(mu, nu, "cx").ordered
    hull = support_hull(nu)
    errs = [vertex_distance(cx_set(mu, nu, x).vertices, hull.vertices) for x in mu.points]
    w = find_witness(mu, nu, mu.points[0])
    dt = time.perf_counter() - t0
    ok = ordered and max(errs) <= 1e-6 and w.k == 3 and dt < 1.0
    assert report(2, ok, f"ordered={ordered}, C_x vertex errors {max(errs):.1e}, witness k={w.k}, {dt:.3f}s")


def test_criterion_3_primal_dual(report, suite):
    t0 = time.perf_counter()
    both, neither, invalid, checked = [], [], [], 0
    for seed, _, mu, nu in suite:
        for rel in Relation:
            a, b = (to_orthant(mu, nu) if rel is Relation.CXPI else (mu, nu))
            c, s = build_coupling(a, b, rel), find_separator(a, b, rel)
            checked += 1
            if c is not None and s is not None:
                both.append((seed, rel.value))
            elif c is None and s is None:
                neither.append((seed, rel.value))
            elif c is not None and exact_coupling(c, a, b) is None:
                invalid.append((seed, rel.value))
            elif s is not None and exact_separator(s, a, b) is None:
                invalid.append((seed, rel.value))
    dt = time.perf_counter() - t0
    ok = not both and not neither and not invalid and dt < 60
    assert report(3, ok, f"{checked} decisions, both={len(both)}, neither={len(neither)}, "
                         f"failed exact re-validation={len(invalid)}, {dt:.1f}s")


def test_criterion_4_proposition(report, suite):
    mismatches, errors = [], []
    for seed, _, mu, nu in suite:
        try:
            cx = check_order(mu, nu, "cx").ordered
            cxp = check_order(mu, nu, "cxp").ordered
        except Exception as exc:  # the criterion counts exceptions
            errors.append((seed, repr(exc)))
            continue
        if cx != (cxp and abs(total_mass(mu) - total_mass(nu)) <= 1e-12):
            mismatches.append(seed)
    ok = not mismatches and not errors
    assert report(4, ok, f"{len(suite)} instances, mismatches={len(mismatches)}, exceptions={len(errors)}")


def test_criterion_5_kernels(report, suite):
    ordered = [(seed, mu, nu) for seed, _, mu, nu in suite if check_order(mu, nu, "cx").ordered]
    worst_transport, worst_bary, fallbacks = 0.0, 0.0, []
    for seed, mu, nu in ordered:
        k = build_kernel_iterative(mu, nu)
        worst_transport = max(worst_transport, kernel_transport_error(k, mu, nu))
        worst_bary = max(worst_bary, float(np.max(kernel_barycenter_residuals(k), initial=0.0)))
        if k.method != "iterative":
            fallbacks.append(seed)
    ok = bool(ordered) and worst_transport <= 1e-6 and worst_bary <= 1e-8
    assert report(5, ok, f"{len(ordered)} cx-ordered instances, max |muK-nu|_1 {worst_transport:.1e}, "
                         f"max barycenter residual {worst_bary:.1e}, LP fallback {len(fallbacks)}/{len(ordered)}")


def _scenarios():
    zero2 = np.zeros((2, 0))
    gaussian = (gaussian_spec([[1.0, 0.3], [0.3, 0.5]]), gaussian_spec([[1.5, 0.2], [0.2, 1.0]]), "cxp")
    poisson = (StrategySpec([0, 1], [np.zeros((1, 0))], [[[1.0]]], [[1.0]]),
               StrategySpec([0, 1], [np.zeros((1, 0))], [[[1.0]]], [[2.0]]), "cxp")
    # diffusion plus signed jumps on two intervals; the G jump measure is a mean-preserving spread
    mixed = (StrategySpec([0, 0.5, 1], [np.diag([1.0, 0.5]), np.diag([0.5, 0.5])],
                          [np.array([[1.0], [0.0]]), np.array([[0.0], [-1.0]])], [[1.0], [2.0]]),
             StrategySpec([0, 0.5, 1], [np.diag([1.2, 0.8]), np.diag([0.5, 1.0])],
                          [np.array([[0.5, 1.5], [0.0, 0.0]]), np.array([[0.0, 0.0], [-0.5, -1.5]])],
                          [[1.0, 1.0], [2.0, 2.0]]), "cxp")
    increasing = (StrategySpec([0, 1], [zero2], [np.array([[1.0, 0.0], [1.0, 0.5]])], [[1.0, 0.5]]),
                  StrategySpec([0, 1], [zero2], [np.array([[2.0, 0.5], [2.0, 1.0]])], [[1.0, 0.5]]), "cxpi")
    marks, rates = [[0.5], [1.0], [2.0]], [1.0, 0.5, 0.25]
    prm = (PoissonMeasureSpec.from_function([0, 0.5, 1], [np.eye(2) * 0.5] * 2, marks, rates,
                                            lambda t, x: [x[0], (1 + t) * x[0]]),
           PoissonMeasureSpec.from_function([0, 0.5, 1], [np.eye(2) * 0.6] * 2, marks, 2 * np.array(rates),
                                            lambda t, x: [x[0], (1 + t) * x[0]]), "cxp")
    return {"gaussian": gaussian, "poisson": poisson, "mixed": mixed, "increasing": increasing,
            "random-measure": prm}


def test_criterion_6_monte_carlo(report):
    t0 = time.perf_counter()
    lines, bad = [], []
    for seed, (name, (f, g, rel)) in enumerate(_scenarios().items()):
        rep = compare(f, g, rel, n_paths=N_PATHS, seed=100 + seed)
        lines.append(f"{name}: {len(rep.violations)} violations/{len(rep.rows)}")
        if rep.violations:
            bad.append(name)
    ctrl = compare(gaussian_spec(2 * np.eye(2)), gaussian_spec(np.eye(2)), n_paths=N_PATHS, seed=99, force=True)
    dt = time.perf_counter() - t0
    ok = not bad and len(ctrl.violations) > 0 and dt < 300
    assert report(6, ok, "; ".join(lines) + f"; control {len(ctrl.violations)} violations; {dt:.1f}s")


def test_criterion_7_gaussian_exact(report):
    rng = np.random.default_rng(7)
    failures = 0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        B, C, D = (rng.normal(size=(d, d)) for _ in range(3))
        Sigma = B @ B.T
        SigmaTilde = Sigma + C @ C.T
        Q = D @ D.T
        a, b, holds = gaussian_exact(Sigma, SigmaTilde, Q)
        oracle = np.trace(Q @ Sigma) <= np.trace(Q @ SigmaTilde) + 1e-12 * abs(np.trace(Q @ SigmaTilde))
        failures += not (holds and oracle)
    assert report(7, failures == 0, f"100 psd-ordered pairs, failures={failures}")


def test_criterion_8_deviation(report):
    spec = StrategySpec([0, 1], [np.zeros((1, 0))], [[[1.0]]], [[1.0]])
    G = simulate_terminal(spec, N_PATHS, seed=8, stream=G_STREAM)
    F = simulate_terminal(spec, N_PATHS, seed=8, stream=F_STREAM)
    rows = deviation_bound(G, [1.0, 2.0, 3.0], f_samples=F)
    detail = ", ".join(f"x={r.x:g}: bound {r.bound:.4f} vs tail {r.tail_F:.4f}" for r in rows)
    assert report(8, all(r.ok for r in rows), detail)
