import json
import math
import subprocess
import sys

import pytest

from geoflow import cli
from geoflow.expr import parse_polynomial, parse_rational


def invoke(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


def write(tmp_path, data, name="model.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(path)


# model loading -------------------------------------------------------------------------

def test_bundled_halfplane_loads():
    m = cli.load_model(cli.resolve_model_path("halfplane"))
    assert m.kind == "chart" and m.metric.n == 2 and not m.compact


def test_bundled_sphere_embedded():
    m = cli.load_model(cli.resolve_model_path("sphere"))
    assert m.kind == "embedded" and m.variety.c == 1 and m.variety.m == 3
    assert m.variety.dimension == 2 and m.compact


def test_every_bundled_model_loads():
    names = cli.bundled_models()
    assert {"halfplane", "sphere", "torus", "twobody", "euclidean2", "disk"} <= set(names)
    for name in names:
        cli.load_model(cli.resolve_model_path(name))


def test_asymmetric_metric_names_both_entries(tmp_path, capsys):
    path = write(tmp_path, {"kind": "chart", "name": "bad", "variables": ["x", "y"], "metric": [["1", "x"], ["y", "1"]]})
    code, _, err = invoke(capsys, "verify", path)
    assert code == 2
    assert "g[0][1]" in err["message"] and "g[1][0]" in err["message"]


def test_parse_error_reports_offset_and_pointer(tmp_path, capsys):
    path = write(tmp_path, {"kind": "chart", "variables": ["x", "y"], "metric": [["1", "x +"], ["x", "1"]]})
    code, _, err = invoke(capsys, "verify", path)
    assert code == 2
    assert err["pointer"] == "/metric/0/1" and err["offset"] == 3


def test_schema_violation_pointer(tmp_path, capsys):
    path = write(tmp_path, {"kind": "chart", "variables": "x", "metric": [["1"]]})
    code, _, err = invoke(capsys, "verify", path)
    assert code == 2 and err["pointer"] == "/variables"
    assert "schema" in err["message"]


def test_invalid_json(tmp_path, capsys):
    code, _, err = invoke(capsys, "verify", write(tmp_path, "{not json"))
    assert code == 2 and err["error"] == "model"


def test_missing_file(capsys):
    code, _, err = invoke(capsys, "verify", "/nonexistent/model.json")
    assert code == 2


def test_bad_flags(capsys):
    code, _, err = invoke(capsys, "geodesic", "halfplane", "--method", "euler")
    assert code == 2 and err["error"] == "validation"
    code, _, _ = invoke(capsys, "geodesic", "halfplane", "--step", "-1")
    assert code == 2
    code, _, _ = invoke(capsys, "geodesic", "halfplane", "--init", "a,b")
    assert code == 2
    code, _, _ = invoke(capsys, "verify", "halfplane", "--threads", "0")
    assert code == 2


# subcommands -------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["euclidean2", "euclidean3", "sphere_r1", "sphere_r2", "halfplane", "disk",
                                  "mixed", "torus", "sphere", "circle"])
def test_verify_bundled(capsys, name):
    code, rep, _ = invoke(capsys, "verify", name)
    assert code == 0 and rep["passed"]


def test_verify_chart_checks(capsys):
    code, rep, _ = invoke(capsys, "verify", "halfplane")
    checks = rep["checks"]
    for key in ("hamiltonian_conserved", "fiber_homogeneous", "energy_scaling_b2", "energy_scaling_b3",
                "legendre_consistency", "model_roundtrip"):
        assert checks[key] is True


def test_curvature_half_plane(capsys):
    code, rep, _ = invoke(capsys, "curvature", "halfplane", "--points", "100", "--planes", "3")
    assert code == 0
    assert rep["min_K"] == -1.0 and rep["max_K"] == -1.0
    assert rep["samples"] == 300


def test_curvature_symbolic_roundtrip(capsys):
    code, rep, _ = invoke(capsys, "curvature", "sphere_r2", "--symbolic", "--points", "5")
    assert code == 0
    K = parse_rational(rep["symbolic_K"], ("u", "v"))
    assert K.equals(parse_rational("1/4", ("u", "v")))


def test_curvature_margin_exit_4(capsys):
    code, rep, _ = invoke(capsys, "curvature", "sphere_r1", "--margin", "0.5", "--points", "5")
    assert code == 4 and rep["certified"] is False


def test_geodesic_half_plane(capsys, tmp_path):
    out = tmp_path / "run"
    code, rep, _ = invoke(capsys, "geodesic", "halfplane", "--init", "0,1,0,1", "--t", "1", "--out", str(out))
    assert code == 0
    assert abs(rep["final"][1] - math.e) < 1e-5
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,x,y,p_x,p_y,H,C")
    assert json.loads((out / "report.json").read_text()) == rep


def test_geodesic_embedded_sphere(capsys):
    code, rep, _ = invoke(capsys, "geodesic", "sphere", "--init", "1,0,0,0,1,0", "--t", str(math.pi))
    assert code == 0
    assert max(abs(a - b) for a, b in zip(rep["final"][:3], (-1, 0, 0))) < 1e-6


def test_geodesic_divergence_exit_3(capsys):
    # unit speed at (0.1, 0): the orbit runs into the boundary circle
    p = 2 / 0.99  # sqrt of the conformal factor 4 / (1 - u^2)^2
    code, rep, err = invoke(capsys, "geodesic", "disk", "--init", f"0.1,0,{p!r},0", "--t", "60", "--step", "0.01")
    assert code == 3 and "failure" in rep
    assert rep["reason"] == "divergence" and err["error"] == "numeric"


def test_geodesic_outside_guard_exit_3(capsys):
    code, rep, err = invoke(capsys, "geodesic", "halfplane", "--init", "0,0,0,1")
    assert code == 3 and err["error"] == "numeric"
    assert "guard" in err["message"] and "final" not in rep


@pytest.mark.slow
def test_dynamics_torus(capsys):
    code, rep, _ = invoke(capsys, "dynamics", "torus", "--recurrence", "--spectrum", "--seed", "7")
    assert code == 0
    assert rep["recurrence"]["fraction"] == 1.0
    assert rep["verdict"]["verdict"] == "NonArithmetic"
    assert rep["hypotheses_met"] is False
    assert rep["label"] == "numerical evidence, not proof"


def test_dynamics_halfplane_non_compact(capsys):
    code, rep, _ = invoke(capsys, "dynamics", "halfplane", "--lyapunov", "--init", "0,1,0,1", "--t", "10")
    assert code == 0
    assert rep["compact"] is False
    assert rep["lyapunov"][0] == pytest.approx(1.0, abs=0.1)


def test_approx_twist(capsys):
    code, rep, _ = invoke(capsys, "approx", "twist", "--f", "x", "--phi", "1", "--epsilon", "0.5", "--degree", "8")
    assert code == 0
    assert rep["identity_residual"] < 1e-12
    parse_polynomial(rep["h"], ("x",))


def test_approx_fit_roundtrip(capsys):
    code, rep, _ = invoke(capsys, "approx", "fit", "--f", "x^3 - 2*x", "--degree", "3")
    assert code == 0
    assert rep["residual_l2"] <= 1e-10
    assert rep["roundtrip"] is True


def test_approx_embed_circle(capsys):
    code, rep, _ = invoke(capsys, "approx", "embed", "circle", "--rho", "x^2,0", "--point", "3/5,4/5")
    assert code == 0
    assert rep["checks"][0]["residual_zero"] is True
    assert rep["checks"][0]["g1"] == [["1201/576"]]


@pytest.mark.parametrize("model, code", [("halfplane", 0), ("sphere", 4), ("euclidean2", 4), ("sphere_r1", 4)])
def test_approx_certify(capsys, model, code):
    got, rep, _ = invoke(capsys, "approx", "certify", model, "--margin", "0.5", "--points", "10")
    assert got == code
    assert rep["certified"] is (code == 0)


def test_nbody_twobody(capsys, tmp_path):
    code, rep, _ = invoke(capsys, "nbody", "twobody", "--t", "5", "--out", str(tmp_path))
    assert code == 0
    assert rep["energy_drift"] < 1e-8
    assert rep["cover"]["max_residual"] < 1e-14
    assert (tmp_path / "trajectory.csv").exists()


def test_nbody_requires_nbody_model(capsys):
    code, _, _ = invoke(capsys, "nbody", "halfplane")
    assert code == 2


# determinism and the console script ----------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["curvature", "halfplane", "--points", "20", "--seed", "3"],
    ["approx", "certify", "sphere", "--points", "5", "--seed", "9"],
    ["geodesic", "mixed", "--t", "0.5", "--seed", "4"],
])
def test_reports_byte_identical(capsys, argv):
    cli.run(argv)
    first = capsys.readouterr().out
    cli.run(argv)
    second = capsys.readouterr().out
    assert first == second and first


def test_dumps_format():
    text = cli.dumps({"b": 0.1, "a": [1, float("nan")], "c": True})
    assert text == '{"a": [1, null], "b": 0.10000000000000001, "c": true}\n'


def test_console_script_exit_code():
    proc = subprocess.run([sys.executable, "-m", "geoflow.cli", "approx", "certify", "sphere", "--points", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 4
    assert json.loads(proc.stdout)["certified"] is False
