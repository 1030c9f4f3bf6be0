import json
import subprocess
import sys

import pytest

from kinetraj.cli import main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_connect_writes_csv(tmp_path, capsys):
    csv_path, prof = tmp_path / "traj.csv", tmp_path / "prof.json"
    code, _, err = run(
        ["trajectory", "connect", "--from", "0,0,0", "--to", "1,0,1", "--samples", "200", "--csv", str(csv_path), "--profile", str(prof)],
        capsys,
    )
    assert code == 0 and "endpoint residual" in err
    assert len(csv_path.read_text().strip().splitlines()) == 201
    assert json.loads(prof.read_text())["verdict"] == "critical"


def test_connect_equal_times(capsys):
    code, _, err = run(["trajectory", "connect", "--from", "1,0,0", "--to", "1,0,1"], capsys)
    assert code == 2 and "t0 == t1" in err


def test_audit_action(capsys):
    code, out, _ = run(["trajectory", "audit", "--family", "action-minimizer"], capsys)
    assert code == 0 and json.loads(out)["verdict"] == "non-critical"


def test_audit_expansion(capsys):
    code, out, _ = run(["trajectory", "audit", "--expansion", "1:1.8"], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["det_leading_exponent"] == pytest.approx(2.3)


def test_constants(capsys):
    code, out, _ = run(["constants", "moser-e1", "--C", "1", "--g1", "1", "--g2", "1", "--kappa", "2", "--p", "1", "--mu", "1"], capsys)
    assert code == 0 and json.loads(out)["M"] == 256
    code, out, _ = run(["constants", "moser-e3", "--p0", "1"], capsys)
    assert json.loads(out)["M"] == 2**30
    code, _, _ = run(["constants", "moser-e1", "--kappa", "1"], capsys)
    assert code == 2


def test_flags_override_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kappa": 3.0, "C": 2.0}))
    code, out, _ = run(["constants", "moser-e1", "--config", str(cfg), "--kappa", "2"], capsys)
    assert code == 0 and json.loads(out)["M"] == 1024
    cfg.write_text(json.dumps({"nonsense": 1}))
    code, _, err = run(["constants", "moser-e1", "--config", str(cfg)], capsys)
    assert code == 2 and "nonsense" in err


def test_experiment_exit_codes(capsys):
    assert run(["experiment", "sobolev", "--n", "1", "--q", "3"], capsys)[0] == 0
    code, out, _ = run(["experiment", "harnack", "--lambda", "0.2", "--Lambda", "5", "--no-solver"], capsys)
    assert code == 0 and json.loads(out)["bounds"]["moser_lower_bound"] == pytest.approx(2.5)
    code, _, err = run(["experiment", "weak-harnack-sharpness"], capsys)
    assert code == 1 and "variation_below" in err
    assert run(["experiment", "log", "--mu", "1"], capsys)[0] == 2


def test_reports_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(["experiment", "log", "--mu", "2", "--nodes", "8", "--seed", "3", "--out", str(path)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "kinetraj", "constants", "moser-e1"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["gamma_tilde"] == 2
