import math
import subprocess
import sys

import numpy as np
import pytest

from torus_holonomy import checks, cli
from torus_holonomy.io import read_csv, read_json, trajectory_header
from torus_holonomy.qtorus import SpectralState
from torus_holonomy.scenario import bundled_scenario_paths

SCENARIOS = {p.stem: p for p in bundled_scenario_paths()}
FAST = ["--cutoff", "8", "--grid", "32", "--dt", "0.01"]


def run(tmp_path, command, scenario, *extra, sub="out"):
    out = tmp_path / sub
    code = cli.main([command, "--scenario", str(SCENARIOS[scenario]), "--out", str(out),
                     *extra])
    return code, out


def check_report(path):
    rep = read_json(path)
    assert set(rep) >= {"checks", "passed"}
    for c in rep["checks"]:
        assert set(c) == {"name", "value", "threshold", "pass"}
    assert rep["passed"] == all(c["pass"] for c in rep["checks"])
    return rep


def test_classical_outputs(tmp_path):
    code, out = run(tmp_path, "classical", "cos_smoothstep", "--dt", "0.01")
    assert code == 0
    for name in ("trajectory.csv", "trajectory_original.csv"):
        header, data = read_csv(out / name)
        assert header == trajectory_header(1)
        assert data.shape == (101, 3)
        assert data[0, 0] == 0.0 and data[-1, 0] == 1.0
    header, data = read_csv(out / "trajectory.csv")
    assert data[0, 1] == 1.0 and data[0, 2] == 0.0
    assert check_report(out / "report.json")["passed"]


def test_quantum_outputs_round_trip(tmp_path):
    code, out = run(tmp_path, "quantum", "cos_smoothstep", *FAST)
    assert code == 0
    header, log = read_csv(out / "propagation_log.csv")
    assert header == ["t", "norm", "leakage", "mean_I_1"]
    np.testing.assert_allclose(log[:, 1], 1.0, atol=1e-12)
    state = SpectralState.from_dict(read_json(out / "final_state.json"))
    assert state.lattice.N == (8,) and state.lam == (0.0,)
    assert abs(state.norm2 - 1.0) < 1e-12
    assert log[-1, 3] == pytest.approx(float(np.sum(state.lattice.modes[:, 0]
                                                    * np.abs(state.coeffs) ** 2)), abs=1e-15)
    header, cmp = read_csv(out / "action_comparison.csv")
    assert header == ["t", "mean_I_1", "I_1"]
    np.testing.assert_array_equal(cmp[:, :2], log[:, [0, 3]])
    assert cmp[0, 2] == 1.0
    assert check_report(out / "report.json")["passed"]


def test_closed_form_output(tmp_path):
    code, out = run(tmp_path, "closed-form", "loop_halfform", *FAST)
    assert code == 0
    header, data = read_csv(out / "closed_form.csv")
    assert header == ["phi_1", "re", "im"]
    assert data.shape == (32, 3)
    np.testing.assert_allclose(data[:, 0], 2 * np.pi * np.arange(32) / 32)
    assert np.mean(data[:, 1] ** 2 + data[:, 2] ** 2) == pytest.approx(1.0, abs=1e-6)


def test_compare_cos_scenario(tmp_path, capsys):
    code, out = run(tmp_path, "compare", "cos_smoothstep")
    assert code == 0
    rep = check_report(out / "report.json")
    (entry,) = rep["checks"]
    assert entry["name"] == "closed_form_l2" and entry["value"] <= 1e-4
    assert "L2 error" in capsys.readouterr().out


def test_berry_table(tmp_path):
    code, out = run(tmp_path, "berry", "berry_constant", "--cutoff", "2", "--grid", "8")
    assert code == 0
    header, data = read_csv(out / "berry.csv")
    assert header[:4] == ["n_1", "re", "im", "phase"]
    np.testing.assert_array_equal(data[:, 0], [-2, -1, 0, 1, 2])
    expect = np.exp(1j * np.array([math.pi, math.pi / 2, 0.0, -math.pi / 2, -math.pi]))
    np.testing.assert_allclose(data[:, 1] + 1j * data[:, 2], expect, atol=1e-15)
    np.testing.assert_allclose(data[:, 4] + 1j * data[:, 5], expect, atol=1e-8)
    assert check_report(out / "report.json")["passed"]


@pytest.mark.parametrize("command", ["classical", "quantum", "closed-form", "berry"])
def test_outputs_byte_identical(tmp_path, command):
    scenario = "berry_constant"
    _, a = run(tmp_path, command, scenario, *FAST, sub="a")
    _, b = run(tmp_path, command, scenario, *FAST, sub="b")
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir()) and files
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_module_qualified_errors(tmp_path, capsys):
    code, _ = run(tmp_path, "quantum", "cos_smoothstep", "--cutoff", "2", "--grid", "8")
    assert code == 2
    assert "quantum-evolution error" in capsys.readouterr().err
    code = cli.main(["quantum", "--out", str(tmp_path)])
    assert code == 2
    assert "input error" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"m": 1, "d": 1, "lambda": [0.3]}')
    assert cli.main(["classical", "--scenario", str(bad), "--out", str(tmp_path)]) == 2
    assert "scenario field 'path'" in capsys.readouterr().err


def test_checks_nonzero_on_failure(tmp_path, monkeypatch, capsys):
    failing = checks.CheckResult("fake", 1.0, 0.5, False)
    monkeypatch.setattr(checks, "acceptance_suite", lambda scenarios=None: {"x": [failing]})
    monkeypatch.setattr(checks, "scenario_checks", lambda sc: [])
    code = cli.main(["checks", "--out", str(tmp_path)])
    assert code == 1
    assert "[FAIL] fake" in capsys.readouterr().out
    rep = check_report(tmp_path / "report.json")
    assert rep["passed"] is False


def test_checks_timing_failure_is_fatal(tmp_path, monkeypatch):
    slow = checks.CheckResult("runtime_s", 20.0, 1.0, False, timing=True)
    monkeypatch.setattr(checks, "acceptance_suite", lambda scenarios=None: {"x": [slow]})
    monkeypatch.setattr(checks, "scenario_checks", lambda sc: [])
    assert cli.main(["checks", "--out", str(tmp_path)]) == 1
    rep = read_json(tmp_path / "report.json")
    assert rep["checks"] == [] and rep["passed"] is False


@pytest.mark.slow
def test_checks_bundled_exit_zero(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "torus_holonomy", "checks", "--out",
                           str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "checks: all passed" in proc.stdout
    assert check_report(tmp_path / "report.json")["passed"]
