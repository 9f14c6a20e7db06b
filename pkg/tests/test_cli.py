import csv
import json

import numpy as np
import pytest

from finslerconn.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from finslerconn.report import CHECK_INDEX, dumps

FUNK = {"kind": "funk_disk", "dim": 2}
SPHERE = {"kind": "riemannian", "dim": 2, "params": {"chart": "sphere"}}


@pytest.fixture
def run(tmp_path, capsys):
    counter = iter(range(1000))

    def _run(command, cfg=None, *extra):
        argv = [command]
        if cfg is not None:
            path = tmp_path / f"cfg{next(counter)}.json"
            path.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
            argv += ["--config", str(path)]
        argv += list(extra)
        code = main(argv)
        out, err = capsys.readouterr()
        return code, out, err

    return _run


def test_tensors_command(run):
    code, out, _ = run("tensors", {"metric": {"kind": "euclidean", "dim": 2}, "points": [{"x": [0.1, 0.2], "y": [3.0, 4.0]}]})
    assert code == EXIT_OK
    doc = json.loads(out)
    res = doc["results"][0]
    assert res["F"] == 5.0
    np.testing.assert_allclose(res["g"], np.eye(2), atol=1e-14)
    np.testing.assert_allclose(res["ell"], [0.6, 0.8], atol=1e-14)
    assert doc["meta"]["command"] == "tensors"
    assert "sign_conventions" in doc["meta"]
    assert set(doc["meta"]["versions"]) == {"finslerconn", "numpy", "python"}


def test_connection_command_defaults_to_cartan(run):
    code, out, _ = run("connection", {"metric": FUNK}, "--samples", "2")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert len(doc["results"]) == 2
    assert doc["results"][0]["params"]["preset"] == "cartan"
    assert np.asarray(doc["results"][0]["Gamma"]).shape == (2, 2, 2)


def test_curvature_expected_flag(run):
    cfg = {"metric": FUNK, "connection": {"preset": "berwald"}, "options": {"expected_flag_curvature": -0.25, "flags": 2}}
    code, out, _ = run("curvature", cfg, "--samples", "3")
    assert code == EXIT_OK
    res = {r["name"]: r for r in json.loads(out)["residuals"]}
    assert res["flag_curvature"]["max_residual"] < 1e-9
    assert res["R_antisymmetry"]["status"] == "PASS"
    cfg["options"]["expected_flag_curvature"] = -1.0
    code, _, _ = run("curvature", cfg, "--samples", "3")
    assert code == EXIT_FAIL


def test_curvature_explicit_flags(run):
    cfg = {"metric": SPHERE, "points": [{"x": [1.0, 0.5], "y": [1.0, 0.0]}], "options": {"flags": [[0.0, 1.0], [1.0, 1.0]]}}
    code, out, _ = run("curvature", cfg)
    assert code == EXIT_OK
    Ks = [f["K"] for f in json.loads(out)["results"][0]["flag_curvature"]]
    np.testing.assert_allclose(Ks, [1.0, 1.0], atol=1e-10)
    cfg["options"]["flags"] = [[2.0, 0.0]]
    code, _, err = run("curvature", cfg)
    assert code == EXIT_USAGE
    assert "options.flags" in err


def test_classify_command(run):
    cfg = {
        "metric": [{"kind": "minkowski_quartic", "dim": 2}, FUNK],
        "options": {"expected": {"minkowski_quartic": {"riemannian": False, "berwald": True, "landsberg": True}}},
    }
    code, out, _ = run("classify", cfg)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["verdicts"]["funk_disk"] == {"riemannian": False, "berwald": False, "landsberg": False}
    cfg["options"]["expected"]["funk_disk"] = {"riemannian": False, "berwald": False, "landsberg": True}
    code, _, _ = run("classify", cfg)
    assert code == EXIT_FAIL


def test_classify_needs_enough_samples(run):
    code, _, err = run("classify", {"metric": FUNK}, "--samples", "10")
    assert code == EXIT_USAGE
    assert "sampler.count" in err


def test_geodesic_command_writes_trace(run, tmp_path):
    cfg = {
        "metric": FUNK,
        "options": {
            "geodesic": {"x0": [0.1, -0.1], "y0": [0.3, 0.8], "t_span": [0.0, 0.6], "steps": 60, "fits": [{"form": "three_term", "parameter": -0.25}]}
        },
    }
    out_dir = tmp_path / "geo"
    code, out, _ = run("geodesic", cfg, "--out-dir", str(out_dir))
    assert code == EXIT_OK
    doc = json.loads(out)
    res = doc["results"][0]
    assert res["ode_parameter"]["lambda"] == pytest.approx(-0.25, abs=1e-9)
    assert res["fits"][0]["residual"] < 1e-10
    assert json.loads((out_dir / "report.json").read_text()) == doc
    rows = list(csv.reader((out_dir / "trace.csv").open()))
    assert rows[0][:3] == ["t", "x1", "x2"] and len(rows) == 62


def test_geodesic_config_errors(run):
    code, _, err = run("geodesic", {"metric": FUNK, "options": {"geodesic": {"x0": [0.0, 0.0]}}})
    assert code == EXIT_USAGE and "options.geodesic" in err
    code, _, err = run("geodesic", {"metric": [FUNK, SPHERE]})
    assert code == EXIT_USAGE and "metric" in err
    bad_fit = {"metric": FUNK, "options": {"geodesic": {"steps": 20, "t_span": [0, 0.2], "fits": [{"form": "cubic", "parameter": 1}]}}}
    code, _, err = run("geodesic", bad_fit)
    assert code == EXIT_USAGE and "fits[0]" in err


def test_verify_single_metric_table(run):
    code, out, _ = run("verify", {"metric": FUNK, "options": {"draws": 1}}, "--samples", "2", "--output", "table")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "# verify"
    assert any(line.startswith("spray_connection") and "PASS" in line for line in lines)
    assert "verdict all_passed: True" in lines


def test_verify_tolerance_override_fails(run):
    code, out, _ = run("verify", {"metric": FUNK, "options": {"draws": 1}}, "--samples", "2", "--tol", "1e-30")
    assert code == EXIT_FAIL
    doc = json.loads(out)
    assert doc["verdicts"]["all_passed"] is False
    assert {r["tol"] for r in doc["residuals"]} == {1e-30}


def test_verify_worker_determinism(run):
    cfg = {"metric": {"kind": "randers", "dim": 2}, "options": {"draws": 1}}
    _, one, _ = run("verify", cfg, "--samples", "3", "--workers", "1")
    _, two, _ = run("verify", cfg, "--samples", "3", "--workers", "2")
    assert one == two
    _, again, _ = run("verify", cfg, "--samples", "3", "--workers", "1")
    assert again == one
    _, other_seed, _ = run("verify", cfg, "--samples", "3", "--seed", "5")
    assert other_seed != one


@pytest.mark.parametrize(
    "cfg, field",
    [
        ('{"metric": ', "line 1"),
        ({"metrik": FUNK}, "unknown keys"),
        ({"metric": {"kind": "hilbert"}}, "metric"),
        ({"metric": FUNK, "sampler": {"count": -1}}, "sampler.count"),
        ({"metric": FUNK, "sampler": {"domain": 2.0}}, "sampler.domain"),
        ({"metric": FUNK, "tolerances": {"nonsense": 1e-3}}, "tolerances.nonsense"),
        ({"metric": FUNK, "connection": {"kappas": [1], "r": "x"}}, "connection.r"),
        ({"metric": FUNK, "points": [{"x": [2.0, 0.0], "y": [1.0, 0.0]}]}, "points[0]"),
        ({"metric": FUNK, "options": {"draws": 0}}, "options.draws"),
    ],
)
def test_config_errors_exit_2(run, cfg, field):
    command = "verify" if "draws" in json.dumps(cfg) else "connection"
    code, out, err = run(command, cfg)
    assert code == EXIT_USAGE
    assert field in err
    assert out == ""


def test_usage_errors(run):
    assert run("bogus")[0] == EXIT_USAGE
    assert run("tensors", None, "--workers", "0")[0] == EXIT_USAGE
    code, _, err = run("tensors", None, "--config", "/nonexistent/cfg.json")
    assert code == EXIT_USAGE and "--config" in err


def test_domain_error_exit_2(run):
    # strong convexity fails on the axes of the quartic norm
    cfg = {"metric": {"kind": "minkowski_quartic", "dim": 2}, "options": {"geodesic": {"x0": [0.0, 0.0], "y0": [1.0, 0.0]}}}
    code, _, err = run("geodesic", cfg)
    assert code == EXIT_USAGE
    assert "error" in err


def test_dumps_is_stable():
    doc = {"b": [1.0, 2], "a": {"z": np.float64(0.1), "y": None, "x": float("nan")}, "c": True}
    text = dumps(doc)
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": {"x": None, "y": None, "z": 0.1}, "b": [1.0, 2], "c": True}
    assert set(CHECK_INDEX) >= {"spray_connection", "landsberg_transport"}
