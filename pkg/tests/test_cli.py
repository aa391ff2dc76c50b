import json

import numpy as np
import pytest

from ratprop import cli
from ratprop import reference as rf

SMALL = ["--nx", "4", "--ny", "4", "--p", "16", "--tau", "0.3", "--Lambda", "20"]


def run(tmp_path, *args):
    return cli.main(list(args) + ["--output", str(tmp_path)])


def test_build_approx_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "build-approx", "--A", "30", "--delta", "1e-10") == cli.EXIT_OK
    assert run(b, "build-approx", "--A", "30", "--delta", "1e-10") == cli.EXIT_OK
    assert (a / "approx.txt").read_bytes() == (b / "approx.txt").read_bytes()
    rep = json.loads((a / "approx_report.json").read_text())
    assert rep["measured_error"] <= 1e-10
    assert rep["max_modulus_3A"] <= 1 + 1e-10
    assert (a / "approx_error.csv").read_text().startswith("y,abs_error\n")
    assert (a / "approx_error.png").stat().st_size > 0


def test_build_approx_rejects_tiny_delta(tmp_path, capsys):
    code = run(tmp_path, "build-approx", "--A", "175.9", "--delta", "1e-16")
    assert code != cli.EXIT_OK
    assert "delta" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["--model", "heat"],
    ["--tau", "-1"],
    ["--nx", "two"],
    ["--preset", "nope"],
    ["--desk"],
    ["--initial", "wave-test"],
    ["--filter-mode", "spline"],
])
def test_config_errors(tmp_path, args):
    assert run(tmp_path, "evolve", *args) == cli.EXIT_CONFIG


def test_config_file(tmp_path):
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({"nx": 3, "tau": 0.5}))
    cfg = cli.build_config(config_file=str(cfg_path), overrides={"tau": "0.25"})
    assert cfg.nx == 3 and cfg.tau == 0.25
    cfg_path.write_text(json.dumps({"bogus": 1}))
    assert run(tmp_path, "evolve", "--config", str(cfg_path)) == cli.EXIT_CONFIG


def test_precompute_cache_hit(tmp_path, capsys):
    assert run(tmp_path, "precompute", *SMALL) == cli.EXIT_OK
    rep = json.loads((tmp_path / "precompute_report.json").read_text())
    assert rep["loaded_from_disk"] is False
    assert rep["solves_per_step"] == rep["half_poles"]
    assert run(tmp_path, "precompute", *SMALL) == cli.EXIT_OK
    rep = json.loads((tmp_path / "precompute_report.json").read_text())
    assert rep["loaded_from_disk"] is True
    # a different tau must not reuse the stored operator
    assert run(tmp_path, "precompute", *SMALL, "--tau", "0.2") == cli.EXIT_OK
    rep = json.loads((tmp_path / "precompute_report.json").read_text())
    assert rep["loaded_from_disk"] is False


def test_evolve_zero_steps(tmp_path):
    assert run(tmp_path, "evolve", *SMALL, "--n-steps", "0") == cli.EXIT_OK
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "step_or_dt,linf,l2,wall_seconds"
    assert len(lines) == 2
    final = np.loadtxt(tmp_path / "final_state.txt")
    assert final.shape == (4 * 15 * 4 * 15, 3)


def test_evolve_steps_and_tolerance(tmp_path):
    assert run(tmp_path, "evolve", *SMALL, "--n-steps", "2", "--tol", "1e-7") == cli.EXIT_OK
    rows = rf.read_series(tmp_path / "trajectory.csv")
    assert len(rows) == 3 and max(r[1] for r in rows[1:]) < 1e-7
    assert (tmp_path / "trajectory.png").exists()
    # an unattainable tolerance maps to the accuracy exit code
    assert run(tmp_path, "evolve", *SMALL, "--n-steps", "1", "--tol", "1e-15") == cli.EXIT_ACCURACY


def test_compare(tmp_path):
    code = run(tmp_path, "compare", *SMALL, "--dt-rk4", "1e-3", "--dt-cheb", "1e-3")
    assert code == cli.EXIT_OK
    rep = json.loads((tmp_path / "comparison.json").read_text())
    assert rep["rational"]["linf_error"] < 1e-7
    assert rep["rk4"]["linf_error"] < 1e-6
    text = (tmp_path / "comparison.csv").read_text().splitlines()
    assert text[0] == "method,linf_error,apply_seconds,precompute_seconds"
    assert [t.split(",")[0] for t in text[1:]] == ["rational", "rk4", "chebyshev"]


def test_verify(tmp_path, capsys):
    assert run(tmp_path, "verify") == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 5
