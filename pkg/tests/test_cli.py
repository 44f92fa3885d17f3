from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from geompot import __version__
from geompot.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_curvature_sphere(capsys):
    code, out, _ = run(["curvature", "--surface", "sphere", "--radius", "1", "--grid", "16x32"], capsys)
    assert code == 0
    table = rows(out)
    assert len(table) == 512
    assert all(float(r["VG"]) == 0.0 for r in table)


def test_curvature_cylinder(capsys):
    code, out, _ = run(["curvature", "--surface", "cylinder", "--radius", "2", "--grid", "8x8"], capsys)
    assert code == 0
    assert_allclose([float(r["VG"]) for r in rows(out)], -1 / 32, rtol=1e-12)


def test_curvature_torus_sign_change(capsys):
    code, out, _ = run(["curvature", "--surface", "torus", "--R", "2", "--r", "0.5", "--grid", "64x64"], capsys)
    assert code == 0
    table = rows(out)
    v = np.array([float(r["v"]) for r in table])
    K = np.array([float(r["K"]) for r in table])
    assert np.all(K[v < np.pi / 2 - 1e-9] > 0) and np.all(K[(v > np.pi / 2 + 1e-9) & (v < np.pi)] < 0)


def test_curvature_json_out(tmp_path, capsys):
    out = tmp_path / "c.json"
    code, stdout, _ = run(["curvature", "--surface", "torus", "--grid", "8x8", "--format", "json", "--out", str(out)], capsys)
    assert code == 0
    body = json.loads(out.read_text())
    assert body["columns"][-1] == "VG" and len(body["rows"]) == 64
    assert body["provenance"]["version"] == __version__
    assert stdout.startswith("u,v,x")


def test_brackets_pass_and_json(tmp_path, capsys):
    out = tmp_path / "b.json"
    code, stdout, _ = run(["brackets", "--surface", "sphere", "--samples", "1000", "--tol", "1e-8", "--out", str(out)], capsys)
    assert code == 0
    lines = stdout.strip().splitlines()[1:]
    assert [ln.split()[0] for ln in lines][:9] == ["EQ3", "EQ4", "EQ5", "EQ6", "EQ7", "EQ8", "EQ9", "NT0", "CMAT"]
    assert all(ln.endswith("PASS") for ln in lines)
    body = json.loads(out.read_text())
    assert body["EQ6"]["pass"] and body["provenance"]["seed"] == 0
    assert body["provenance"]["tolerances"] == {"identity": 1e-8}


def test_brackets_forced_failure(capsys):
    code, stdout, _ = run(["brackets", "--samples", "50", "--tol", "1e-16"], capsys)
    assert code == 1
    assert "FAIL" in stdout


def test_brackets_deterministic(tmp_path, capsys):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(["brackets", "--surface", "torus", "--seed", "5", "--samples", "200", "--out", str(p)], capsys)[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_spectrum_sphere(capsys):
    code, out, _ = run(["spectrum", "--surface", "sphere", "--k", "9", "--grid", "64x128"], capsys)
    assert code == 0
    vals = [float(r["eigenvalue"]) for r in rows(out)]
    assert_allclose(vals, [0, 1, 1, 1, 3, 3, 3, 3, 3], rtol=2e-3, atol=1e-10)
    code2, out2, _ = run(["spectrum", "--surface", "sphere", "--k", "9", "--grid", "64x128", "--no-geometric-potential"], capsys)
    assert code2 == 0 and out2 == out


def test_spectrum_torus_vg_lowers_ground(capsys):
    base = ["spectrum", "--surface", "torus", "--k", "4", "--grid", "32x32"]
    _, with_vg, _ = run(base, capsys)
    _, without, _ = run(base + ["--no-geometric-potential"], capsys)
    assert float(rows(with_vg)[0]["eigenvalue"]) < float(rows(without)[0]["eigenvalue"])


def test_spectrum_no_convergence_exit(capsys):
    code, _, err = run(["spectrum", "--surface", "torus", "--grid", "16x16", "--k", "2", "--tol", "1e-300"], capsys)
    assert code == 1 and "converge" in err


def test_verify_quantum_discriminator(tmp_path, capsys):
    out = tmp_path / "q.json"
    argv = ["verify-quantum", "--surface", "torus", "--center", "0.7,-0.4,0.3",
            "--grid", "32x32", "--grid", "64x64", "--grid", "128x128", "--out", str(out)]
    run(argv, capsys)
    body = json.loads(out.read_text())
    eq17 = {r["identity"]: r for r in body["reports"]}["EQ17"]
    assert eq17["pass"] and abs(eq17["order"] - 2) <= 0.3
    run(argv + ["--no-geometric-potential", "--discriminator"], capsys)
    body = json.loads(out.read_text())
    eq17 = {r["identity"]: r for r in body["reports"]}["EQ17"]
    assert eq17["status"] == "VIOLATED-as-expected"
    assert body["provenance"]["discriminator"] is True
    assert body["provenance"]["test_suite"] == "trig-v1"


def test_verify_quantum_flat_orders(capsys):
    code, out, _ = run(["verify-quantum", "--surface", "plane", "--grid", "8x8", "--grid", "16x16", "--grid", "32x32",
                        "--format", "json"], capsys)
    body = json.loads(out)
    reps = {r["identity"]: r for r in body["reports"]}
    for name in ("EQ12", "EQ15", "EQ16", "EQ26", "EQ27"):
        assert reps[name]["order"] == "exact"
        assert max(g["residual"] for g in reps[name]["grids"]) <= 1e-12
    assert code in (0, 1)


def test_verify_quantum_needs_ladder(capsys):
    code, _, err = run(["verify-quantum", "--surface", "torus", "--grid", "8x8"], capsys)
    assert code == 2 and "ladder" in err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["curvature", "--surface", "donut"],
        ["curvature", "--grid", "3x"],
        ["spectrum", "--k", "0"],
        ["spectrum", "--surface", "plane", "--radius", "2"],
        ["curvature", "--grid", "16x16", "--grid", "8x8"],
        ["brackets", "--tol", "-1"],
        ["brackets", "--center", "1,2"],
        ["spectrum", "--surface", "torus", "--R", "0.2", "--r", "0.5"],
        ["spectrum", "--surface", "torus", "--grid", "4x4", "--k", "9"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2


def test_config_file_and_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# spectrum run\nsurface = torus\ngrid = 16x16,24x24\nk = 2\nseed = 4\nno-geometric-potential = true\n")
    code, out_cfg, _ = run(["spectrum", "--config", str(cfg), "--format", "json"], capsys)
    assert code == 0
    body = json.loads(out_cfg)
    prov = body["provenance"]
    assert prov["surface"] == "torus" and prov["seed"] == 4
    assert prov["grids"] == [{"n_u": 24, "n_v": 24}]
    assert prov["include_geometric_potential"] is False
    assert len(body["eigenvalues"]) == 2
    code, out_flag, _ = run(["spectrum", "--config", str(cfg), "--surface", "cylinder", "--k", "1", "--format", "json"], capsys)
    prov = json.loads(out_flag)["provenance"]
    assert prov["surface"] == "cylinder"


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 1\n")
    assert main(["spectrum", "--config", str(bad)]) == 2
    bad.write_text("just words\n")
    assert main(["spectrum", "--config", str(bad)]) == 2
    bad.write_text("k = many\n")
    assert main(["spectrum", "--config", str(bad)]) == 2
    assert main(["spectrum", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "geompot.cli", "curvature", "--surface", "plane", "--grid", "4x4"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert len(proc.stdout.splitlines()) == 17
