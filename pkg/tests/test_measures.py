import json
from fractions import Fraction

import numpy as np
import pytest

from convex_order.errors import BadDirection, DimensionMismatch, ZeroMass
from convex_order.measures import (DiscreteMeasure, barycenter, project, survival, total_mass,
                                   union_support)


def test_duplicate_atoms_merge_and_zero_masses_drop():
    m = DiscreteMeasure(2, [[0, 0], [0, 0], [1, 1]], [0.25, 0.25, 0.0])
    assert len(m) == 1
    assert m.masses[0] == 0.5


def test_arrays_are_read_only():
    m = DiscreteMeasure.dirac([1.0, 2.0])
    with pytest.raises(ValueError):
        m.points[0, 0] = 3.0


def test_total_mass_and_barycenter(square_pair):
    mu, nu = square_pair
    assert total_mass(mu) == 1.0
    np.testing.assert_allclose(barycenter(mu), [0, 0])
    np.testing.assert_allclose(barycenter(nu), [0, 0])


def test_barycenter_of_empty_measure_raises():
    with pytest.raises(ZeroMass):
        barycenter(DiscreteMeasure(2))


def test_projection_merges_equal_values(square_pair):
    _, nu = square_pair
    p = project(nu, [1.0, 0.0])
    np.testing.assert_allclose(p.breakpoints, [-1, 1])
    np.testing.assert_allclose(p.masses, [0.5, 0.5])


def test_direction_must_be_unit():
    m = DiscreteMeasure.dirac([0.0, 0.0])
    with pytest.raises(BadDirection):
        project(m, [1.0, 1.0])
    with pytest.raises(DimensionMismatch):
        project(m, [1.0])


def test_survival_against_direct_sum(rng):
    m = DiscreteMeasure(3, rng.normal(size=(5, 3)), rng.uniform(size=5))
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    a = np.linspace(-3, 3, 13)
    direct = [sum(w * max(p @ u - t, 0.0) for p, w in zip(m.points, m.masses)) for t in a]
    np.testing.assert_allclose(survival(m, u, a), direct, atol=1e-14)
    np.testing.assert_allclose(project(m, u).survival(a), direct, atol=1e-14)


def test_survival_is_convex_nonincreasing_in_threshold(rng):
    m = DiscreteMeasure(2, rng.normal(size=(6, 2)), rng.uniform(size=6))
    u = np.array([0.6, 0.8])
    a = np.linspace(-4, 4, 401)
    s = survival(m, u, a)
    assert np.all(np.diff(s) <= 1e-15)
    assert np.all(s[:-2] + s[2:] - 2 * s[1:-1] >= -1e-12)


def test_union_support_keeps_first_appearance_order(square_pair):
    mu, nu = square_pair
    P = union_support(mu, nu)
    assert P.shape == (6, 2)
    np.testing.assert_array_equal(P[:2], mu.points)


def test_json_round_trip(tmp_path, triangle_pair):
    mu, _ = triangle_pair
    path = tmp_path / "mu.json"
    mu.dump(path)
    back = DiscreteMeasure.load(path)
    np.testing.assert_array_equal(back.points, mu.points)
    np.testing.assert_array_equal(back.masses, mu.masses)


def test_rational_input_only_in_exact_mode():
    data = {"dimension": 1, "atoms": [{"point": ["1/3"], "rational": "2/3"}]}
    with pytest.raises(ValueError):
        DiscreteMeasure.from_dict(data)
    m = DiscreteMeasure.from_dict(data, exact=True)
    assert m.exact_masses() == [Fraction(2, 3)]
    assert m.exact_points() == [(Fraction(1, 3),)]


def test_malformed_json_rejected():
    with pytest.raises(ValueError):
        DiscreteMeasure.from_dict({"atoms": []})
    with pytest.raises(DimensionMismatch):
        DiscreteMeasure.from_dict(json.loads('{"dimension": 2, "atoms": [{"point": [1], "mass": 1}]}'))


def test_negative_mass_rejected():
    with pytest.raises(ValueError):
        DiscreteMeasure(1, [[0.0]], [-1.0])
