import json
import math

import numpy as np
import pytest

from convex_order.errors import BadSpec, GridMismatch, NotPsd
from convex_order.sim import (PoissonMeasureSpec, StrategySpec, compare, convex_battery, decide,
                              deviation_bound, gaussian_exact, gaussian_spec, load_scenario,
                              scenario_from_dict, simulate_terminal, verify_hypotheses)

N = 40_000


def poisson_spec(rate, jump=1.0, T=1.0):
    return StrategySpec([0.0, T], [[[0.0]]], [[[jump]]], [[rate]])


def test_zero_spec_gives_zero_samples():
    spec = StrategySpec([0, 1], [np.zeros((2, 1))], [np.zeros((2, 1))], [[0.0]])
    assert np.all(simulate_terminal(spec, 100, seed=1) == 0)


def test_brownian_variance():
    x = simulate_terminal(StrategySpec([0, 1], [[[1.0]]], [np.zeros((1, 0))], [[]]), N, seed=2)
    assert np.var(x, ddof=1) == pytest.approx(1.0, abs=3 * math.sqrt(2 / N))


def test_compensated_poisson_variance_and_mean():
    x = simulate_terminal(poisson_spec(1.0), N, seed=3)
    assert np.var(x, ddof=1) == pytest.approx(1.0, abs=3 * math.sqrt(3 / N))
    assert abs(np.mean(x)) <= 4 * np.std(x) / math.sqrt(N)


def test_piecewise_grid_adds_interval_variances():
    spec = StrategySpec([0, 0.5, 2.0], [[[1.0]], [[2.0]]], [[[1.0]], [[0.0]]], [[2.0], [0.0]])
    x = simulate_terminal(spec, N, seed=4)
    expected = 0.5 + 4 * 1.5 + 2.0 * 0.5
    assert np.var(x, ddof=1) == pytest.approx(expected, rel=0.05)


def test_mean_zero_for_mixed_spec():
    spec = StrategySpec([0, 1], [np.array([[1.0, 0.5], [0.0, 1.0]])],
                        [np.array([[1.0, -2.0], [0.5, 0.0]])], [[1.5, 0.3]])
    x = simulate_terminal(spec, N, seed=5)
    se = np.std(x, axis=0, ddof=1) / math.sqrt(N)
    assert np.all(np.abs(x.mean(axis=0)) <= 4 * se)


def test_determinism_across_threads():
    spec = poisson_spec(2.0)
    a = simulate_terminal(spec, 30_000, seed=7, workers=1)
    b = simulate_terminal(spec, 30_000, seed=7, workers=4)
    np.testing.assert_array_equal(a, b)
    c = simulate_terminal(spec, 30_000, seed=8, workers=4)
    assert not np.array_equal(a, c)


def test_poisson_measure_spec_reduces_to_columns():
    spec = PoissonMeasureSpec.from_function([0, 1], [np.zeros((1, 0))], [[1.0], [2.0]], [0.5, 0.25],
                                            lambda t, x: [x[0]])
    s = spec.as_strategy()
    np.testing.assert_array_equal(s.J[0], [[1.0, 2.0]])
    x = simulate_terminal(spec, N, seed=9)
    assert np.var(x, ddof=1) == pytest.approx(0.5 + 4 * 0.25, rel=0.05)
    with pytest.raises(BadSpec):
        PoissonMeasureSpec([0, 1], [np.zeros((1, 0))], [[1.0]], [-1.0], [[[1.0]]])


def test_bad_specs_rejected():
    with pytest.raises(BadSpec):
        StrategySpec([0, 1], [[[1.0]]], [[[1.0]]], [[-1.0]])
    with pytest.raises(BadSpec):
        StrategySpec([0.5, 1], [[[1.0]]], [[[1.0]]], [[1.0]])
    with pytest.raises(BadSpec):
        StrategySpec([0, 1, 2], [[[1.0]]], [[[1.0]]], [[1.0]])
    with pytest.raises(BadSpec):
        simulate_terminal(poisson_spec(1.0), 0, seed=1)


# -- battery -------------------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 3])
def test_battery_is_midpoint_convex(d):
    rng = np.random.default_rng(d)
    battery = convex_battery(d, scale=1.5)
    assert any(f.name == "norm^2" for f in battery)
    x, y = rng.normal(size=(500, d)) * 3, rng.normal(size=(500, d)) * 3
    for f in battery:
        mid = f(0.5 * (x + y))
        assert np.all(mid <= 0.5 * (f(x) + f(y)) + 1e-9 * (1 + np.abs(mid))), f.name


@pytest.mark.parametrize("d", [1, 2, 3])
def test_nondecreasing_sub_battery(d):
    rng = np.random.default_rng(10 + d)
    sub = convex_battery(d, nondecreasing_only=True)
    assert 0 < len(sub) < len(convex_battery(d))
    x = rng.normal(size=(500, d)) * 3
    y = x + rng.uniform(0, 2, size=(500, d))
    for f in sub:
        assert np.all(f(x) <= f(y) + 1e-12), f.name


# -- hypotheses ----------------------------------------------------------------------

def test_identical_specs_pass():
    s = poisson_spec(1.0)
    assert verify_hypotheses(s, s).ok


def test_higher_rate_passes():
    assert verify_hypotheses(poisson_spec(1.0), poisson_spec(2.0), "cxp").ok
    assert not verify_hypotheses(poisson_spec(2.0), poisson_spec(1.0), "cxp").ok


def test_larger_jumps_need_the_increasing_order():
    def spec(j):
        return StrategySpec([0, 1], [np.zeros((2, 0))], [[[j], [j]]], [[1.0]])
    f, g = spec(1.0), spec(2.0)
    assert not verify_hypotheses(f, g, "cxp").ok
    assert verify_hypotheses(f, g, "cxpi").ok


def test_covariance_comparison():
    f, g = gaussian_spec(2 * np.eye(2)), gaussian_spec(np.eye(2))
    rep = verify_hypotheses(f, g)
    assert not rep.ok and rep.intervals[0].min_eigenvalue == pytest.approx(-1.0)
    assert verify_hypotheses(g, f).ok


def test_grid_mismatch():
    with pytest.raises(GridMismatch):
        verify_hypotheses(poisson_spec(1.0, T=1.0), poisson_spec(1.0, T=2.0))


def test_hypotheses_on_refined_grid():
    f = StrategySpec([0, 1], [[[1.0]]], [np.zeros((1, 0))], [[]])
    g = StrategySpec([0, 0.5, 1], [[[2.0]], [[0.5]]], [np.zeros((1, 0))] * 2, [[], []])
    rep = verify_hypotheses(f, g)
    assert [r.psd_ok for r in rep.intervals] == [True, False]


# -- comparisons ---------------------------------------------------------------------

def test_decision_rule():
    assert decide(1.0, 1.0, 0.1, 0.1) == "consistent"
    assert decide(1.3, 1.0, 0.1, 0.1) == "inconclusive"
    assert decide(2.0, 1.0, 0.1, 0.1) == "violation"


def test_equal_specs_show_no_violation():
    s = poisson_spec(1.0)
    rep = compare(s, s, n_paths=N, seed=11)
    assert rep.violations == []


def test_poisson_rates_second_moment():
    rep = compare(poisson_spec(1.0), poisson_spec(2.0), n_paths=N, seed=12)
    row = next(r for r in rep.rows if r.name == "norm^2")
    assert row.mean_F == pytest.approx(1.0, abs=0.05)
    assert row.mean_G == pytest.approx(2.0, abs=0.1)
    assert rep.violations == []


def test_gaussian_trace_means():
    rep = compare(gaussian_spec(np.diag([1.0, 0.0])), gaussian_spec(np.eye(2)), n_paths=N, seed=13)
    row = next(r for r in rep.rows if r.name == "norm^2")
    assert row.mean_F == pytest.approx(1.0, abs=0.05) and row.mean_G == pytest.approx(2.0, abs=0.08)


def test_control_needs_force_and_then_fails():
    f, g = gaussian_spec(2 * np.eye(2)), gaussian_spec(np.eye(2))
    with pytest.raises(BadSpec):
        compare(f, g, n_paths=1000, seed=1)
    rep = compare(f, g, n_paths=N, seed=14, force=True)
    assert rep.forced and any(r.name == "norm^2" for r in rep.violations)


def test_report_serializes():
    rep = compare(poisson_spec(1.0), poisson_spec(2.0), n_paths=2000, seed=15)
    data = json.loads(json.dumps(rep.to_dict()))
    assert data["violations"] == 0 and len(data["rows"]) == len(rep.rows)
    assert "norm^2" in rep.table()


# -- exact gaussian and deviation ----------------------------------------------------

def test_gaussian_exact_examples():
    assert gaussian_exact(np.diag([1.0, 0.0]), np.eye(2), np.eye(2)) == (1.0, 2.0, True)
    a, b, ok = gaussian_exact(np.zeros((2, 2)), np.eye(2), np.diag([1.0, 3.0]))
    assert (a, b, ok) == (0.0, 4.0, True)
    S = np.array([[2.0, 1.0], [1.0, 2.0]])
    a, b, ok = gaussian_exact(S, S, np.eye(2))
    assert a == b and ok
    with pytest.raises(NotPsd):
        gaussian_exact(np.diag([1.0, -1.0]), np.eye(2), np.eye(2))


def test_deviation_bound_examples():
    rng = np.random.default_rng(16)
    G = rng.normal(size=(N, 1))
    assert deviation_bound(G, [0.0])[0].bound == 1.0
    zero = deviation_bound(np.zeros((100, 1)), [1.0])[0]
    assert zero.bound == pytest.approx(math.exp(-5.0))
    F = rng.normal(size=(N, 1))
    row = deviation_bound(G, [3.0], f_samples=F)[0]
    assert row.ok and row.bound <= 1.0
    assert row.bound >= 2 * 0.00135 - 4 * row.se_tail


def test_deviation_bound_rejects_empty():
    with pytest.raises(BadSpec):
        deviation_bound(np.zeros((0, 1)), [1.0])


# -- scenario files ------------------------------------------------------------------

def test_scenario_loader(tmp_path):
    data = {"horizon": 1.0, "grid": [0, 1], "relation": "cxp",
            "F": {"A": [[[0.0]]], "J": [[[1.0]]], "lambda": [[1.0]]},
            "G": {"A": [[[0.0]]], "J": [[[1.0]]], "lambda": [[2.0]]}}
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    sc = load_scenario(path)
    assert sc.relation == "cxp" and sc.G.lam[0][0] == 2.0
    marks = {"horizon": 1.0, "F": {"marks": [[1.0]], "rates": [1.0], "jump": [[[1.0]]]},
             "G": {"marks": [[1.0]], "rates": [2.0], "jump": [[[1.0]]]}}
    assert isinstance(scenario_from_dict(marks).F, PoissonMeasureSpec)


@pytest.mark.parametrize("bad", [
    {"F": {}},
    {"horizon": 1.0, "F": {"A": [[[1.0]]]}, "G": {}},
    {"horizon": 2.0, "grid": [0, 1], "F": {"A": [[[1.0]]]}, "G": {"A": [[[1.0]]]}},
    {"horizon": 1.0, "relation": "icx", "F": {"A": [[[1.0]]]}, "G": {"A": [[[1.0]]]}},
    {"horizon": 1.0, "F": {"J": [[[1.0]]], "lambda": [[-1.0]]}, "G": {"A": [[[1.0]]]}},
])
def test_scenario_errors(bad):
    with pytest.raises(BadSpec):
        scenario_from_dict(bad)
