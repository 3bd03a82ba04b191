import json
import math

import numpy as np
import pytest

from convex_order.cli import main
from convex_order.measures import DiscreteMeasure

R3 = math.sqrt(3) / 2


@pytest.fixture
def files(tmp_path, square_pair, triangle_pair):
    out = {}

    def put(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        out[name.split(".")[0]] = str(path)

    for name, m in (("mu1", square_pair[0]), ("nu1", square_pair[1]),
                    ("mu2", triangle_pair[0]), ("nu2", triangle_pair[1]),
                    ("d0", DiscreteMeasure(1, [[0.0]], [1.0])),
                    ("spread", DiscreteMeasure(1, [[-1.0], [2.0]], [0.5, 0.5]))):
        put(f"{name}.json", m.to_dict())
    put("mu2r.json", {"dimension": 2, "atoms": [{"point": ["1/2", "0"], "rational": "1/3"},
                                                 {"point": ["-1/4", "0"], "rational": "2/3"}]})
    put("nu2r.json", {"dimension": 2, "atoms": [{"point": ["1", "0"], "rational": "1/3"},
                                                 {"point": ["-1/2", repr(R3)], "rational": "1/3"},
                                                 {"point": ["-1/2", repr(-R3)], "rational": "1/3"}]})
    put("pois.json", {"horizon": 1, "F": {"J": [[[1.0]]], "lambda": [[1.0]]},
                      "G": {"J": [[[1.0]]], "lambda": [[2.0]]}, "relation": "cxp"})
    put("ctrl.json", {"horizon": 1, "F": {"A": [[[math.sqrt(2), 0], [0, math.sqrt(2)]]]},
                      "G": {"A": [[[1, 0], [0, 1]]]}})
    put("badgrid.json", {"horizon": 1, "grid": [0, 2], "F": {"A": [[[1.0]]]}, "G": {"A": [[[1.0]]]}})
    out["dir"] = tmp_path
    return out


def run(*args):
    return main([str(a) for a in args])


def test_order_check_ordered(files, tmp_path, capsys):
    cert = tmp_path / "c.json"
    assert run("order", "check", "--relation", "cx", "--mu", files["mu1"], "--nu", files["nu1"],
               "--certificate", cert) == 0
    assert "ordered" in capsys.readouterr().out
    data = json.loads(cert.read_text())
    np.testing.assert_allclose(np.sum(data["pi"]), 1.0)
    assert run("validate", cert, "--mu", files["mu1"], "--nu", files["nu1"]) == 0


def test_order_check_separator(files, tmp_path):
    cert = tmp_path / "s.json"
    assert run("order", "check", "--relation", "cxp", "--mu", files["d0"], "--nu", files["spread"],
               "--certificate", cert) == 1
    assert "subgradients" in json.loads(cert.read_text())
    assert run("validate", cert, "--mu", files["d0"], "--nu", files["spread"]) == 0


def test_order_check_exact(files, tmp_path):
    cert = tmp_path / "e.json"
    assert run("order", "check", "--relation", "cx", "--mu", files["mu2r"], "--nu", files["nu2r"],
               "--certificate", cert, "--exact") == 0
    pi = json.loads(cert.read_text())["exact_pi"]
    assert pi == [["2/9", "1/18", "1/18"], ["1/9", "5/18", "5/18"]]


def test_order_check_errors(files, tmp_path):
    assert run("order", "check", "--relation", "cx", "--mu", tmp_path / "missing.json", "--nu", files["nu1"]) == 2
    assert run("order", "check", "--relation", "cx", "--mu", files["d0"], "--nu", files["nu1"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("order", "check", "--relation", "cx", "--mu", bad, "--nu", files["nu1"]) == 2
    assert run("order", "check", "--relation", "cxpi", "--mu", files["mu1"], "--nu", files["nu1"]) == 2


def test_geometry_cx_set(files, tmp_path):
    out = tmp_path / "p.json"
    assert run("geometry", "cx-set", "--mu", files["mu1"], "--nu", files["nu1"], "--point", "-1,0",
               "--out", out) == 0
    verts = np.array(json.loads(out.read_text())["vertices"])
    np.testing.assert_allclose(verts[np.argsort(verts[:, 1])], [[-1, -1], [-1, 1]], atol=1e-6)
    assert run("validate", out, "--mu", files["mu1"], "--nu", files["nu1"], "--point", "-1,0") == 0
    assert run("geometry", "cx-set", "--mu", files["mu2"], "--nu", files["nu2"], "--point", "0.5,0",
               "--out", out) == 0
    assert len(json.loads(out.read_text())["vertices"]) == 3


def test_geometry_subset(files, tmp_path):
    out = tmp_path / "p.json"
    assert run("geometry", "cx-set", "--mu", files["mu1"], "--nu", files["nu1"], "--point", "-1,0",
               "--subset", files["mu1"], "--out", out) == 0
    assert len(json.loads(out.read_text())["vertices"]) == 4


def test_geometry_witness(files, tmp_path):
    out = tmp_path / "w.json"
    assert run("geometry", "witness", "--mu", files["mu2"], "--nu", files["nu2"], "--point", "0.5,0",
               "--out", out) == 0
    w = json.loads(out.read_text())
    assert sorted(np.round(w["weights"], 8)) == pytest.approx([1 / 6, 1 / 6, 2 / 3])
    assert run("validate", out, "--mu", files["mu2"], "--nu", files["nu2"]) == 0


def test_geometry_errors(files):
    assert run("geometry", "cx-set", "--mu", files["mu1"], "--nu", files["nu1"], "--point", "a,b") == 2
    assert run("geometry", "witness", "--mu", files["mu1"], "--nu", files["mu1"], "--point", "-1,0") == 2
    # reversed pair: the stop-loss transforms cross
    assert run("geometry", "cx-set", "--mu", files["nu1"], "--nu", files["mu1"], "--point", "0,-1") == 1


def test_kernel_build(files, tmp_path):
    out = tmp_path / "k.json"
    for method in ("iterative", "lp"):
        assert run("kernel", "build", "--mu", files["mu1"], "--nu", files["nu1"], "--method", method,
                   "--out", out) == 0
        data = json.loads(out.read_text())
        assert max(data["barycenter_residuals"]) <= 1e-8
        assert run("validate", out, "--mu", files["mu1"], "--nu", files["nu1"]) == 0
    assert run("kernel", "build", "--mu", files["mu1"], "--nu", files["mu1"], "--out", out) == 0
    np.testing.assert_allclose(json.loads(out.read_text())["kernel"], np.eye(2))
    assert run("kernel", "build", "--mu", files["d0"], "--nu", files["spread"]) == 1


def test_validate_rejects_tampered_coupling(files, tmp_path):
    cert = tmp_path / "c.json"
    run("order", "check", "--relation", "cx", "--mu", files["mu1"], "--nu", files["nu1"], "--certificate", cert)
    data = json.loads(cert.read_text())
    data["pi"][0][0] = 0.3
    cert.write_text(json.dumps(data))
    assert run("validate", cert, "--mu", files["mu1"], "--nu", files["nu1"]) == 1


def test_sim_compare(files, tmp_path, capsys):
    out = tmp_path / "r.json"
    assert run("sim", "compare", "--scenario", files["pois"], "--paths", 20000, "--seed", 1, "--out", out) == 0
    assert json.loads(out.read_text())["violations"] == 0
    assert "norm^2" in capsys.readouterr().out
    assert run("sim", "compare", "--scenario", files["ctrl"], "--paths", 20000, "--seed", 1) == 2
    assert run("sim", "compare", "--scenario", files["ctrl"], "--paths", 20000, "--seed", 1, "--force") == 1
    assert run("sim", "compare", "--scenario", files["badgrid"], "--paths", 100, "--seed", 1) == 2


def test_sim_requires_seed(files):
    assert run("sim", "compare", "--scenario", files["pois"], "--paths", 100) == 2


def test_sim_deviation(files, tmp_path):
    out = tmp_path / "d.json"
    assert run("sim", "deviation", "--scenario", files["pois"], "--x-grid", "1,2,3", "--paths", 20000,
               "--seed", 2, "--out", out) == 0
    rows = json.loads(out.read_text())["rows"]
    assert [r["x"] for r in rows] == [1.0, 2.0, 3.0]


def test_exit_codes_are_stable(files):
    args = ("sim", "compare", "--scenario", files["pois"], "--paths", 5000, "--seed", 3)
    assert run(*args) == run(*args) == 0
