from __future__ import annotations

import json
import re
import subprocess
import sys

import numpy as np
import pytest


def run_cli(tmp_path, command, config, out="out", extra=()):
    cfg_path = tmp_path / f"{command}.json"
    cfg_path.write_text(config if isinstance(config, str) else json.dumps(config))
    return subprocess.run([sys.executable, "-m", "martinet", command, "--config", str(cfg_path),
                           "--out", str(tmp_path / out), *extra], capture_output=True, text=True)


def outputs(tmp_path, out="out"):
    return {p.name: p.read_bytes() for p in sorted((tmp_path / out).iterdir())}


def only(files, pattern):
    names = [n for n in files if re.fullmatch(pattern, n)]
    assert len(names) == 1, names
    return names[0]


def test_eigen_dump_and_large_mu(tmp_path):
    res = run_cli(tmp_path, "eigen", {"mu": [0.0, 100.0], "k": [1]})
    assert res.returncode == 0, res.stderr
    files = outputs(tmp_path)
    rows = np.loadtxt(tmp_path / "out" / only(files, r"eigen_[0-9a-f]{16}_psi\.csv"), delimiter=",", skiprows=1)
    psi0 = rows[rows[:, 0] == 0.0]
    h = psi0[1, 2] - psi0[0, 2]
    assert h * np.sum(psi0[:, 3] ** 2) == pytest.approx(1.0, abs=1e-9)
    table = np.loadtxt(tmp_path / "out" / only(files, r"eigen_[0-9a-f]{16}\.csv"), delimiter=",", skiprows=1)
    assert abs(table[1, 2] - 10014.142) < 0.01
    manifest = json.loads(files[only(files, r"manifest_[0-9a-f]{16}\.json")])
    assert manifest["command"] == "eigen" and len(manifest["outputs"]) == 2


def test_eigen_deterministic(tmp_path):
    cfg = {"mu": [-3.0, 2.0], "k": [1, 2], "dump_psi": False}
    assert run_cli(tmp_path, "eigen", cfg, "a").returncode == 0
    assert run_cli(tmp_path, "eigen", cfg, "b").returncode == 0
    assert outputs(tmp_path, "a") == outputs(tmp_path, "b")


@pytest.mark.parametrize("config", ['{"mu":', '{"mu": [0], "bogus": 1}', '[1, 2]', '{"mu": ["x"]}'])
def test_bad_config_exits_one(tmp_path, config):
    res = run_cli(tmp_path, "eigen", config)
    assert res.returncode == 1
    assert "config error" in res.stderr


def test_missing_config_file(tmp_path):
    res = subprocess.run([sys.executable, "-m", "martinet", "eigen", "--config", str(tmp_path / "none.json")],
                         capture_output=True, text=True)
    assert res.returncode == 1


def test_usage_error_exits_one():
    res = subprocess.run([sys.executable, "-m", "martinet", "eigen"], capture_output=True, text=True)
    assert res.returncode == 1


def test_bad_threads(tmp_path):
    assert run_cli(tmp_path, "eigen", {"mu": [0.0]}, extra=("--threads", "0")).returncode == 1


def test_dispersion_outputs_and_rerun(tmp_path):
    cfg = {"mu_min": -10.0, "mu_max": 10.0}
    assert run_cli(tmp_path, "dispersion", cfg, "a").returncode == 0
    files = outputs(tmp_path, "a")
    data = np.loadtxt(tmp_path / "a" / only(files, r"dispersion_[0-9a-f]{16}_k1\.csv"), delimiter=",", skiprows=1)
    assert data.shape == (1001, 3)
    assert np.all(np.abs(data[:, 2]) < 1)
    summary = json.loads(files[only(files, r"dispersion_[0-9a-f]{16}\.json")])
    assert summary["k1"]["a_k"] < 0 and summary["k1"]["mu_star"] < 0
    assert run_cli(tmp_path, "dispersion", cfg, "b", extra=("--threads", "2")).returncode == 0
    assert outputs(tmp_path, "b") == files


def test_asymptotics(tmp_path):
    cfg = {"cases": [{"regime": "plus", "quantity": "dF", "mu": [25, 50, 100]},
                     {"regime": "minus", "quantity": "dF", "mu": [-100, -50, -25]}],
           "gap_mu": [-5, -10, -20]}
    res = run_cli(tmp_path, "asymptotics", cfg)
    assert res.returncode == 0, res.stderr
    files = outputs(tmp_path)
    doc = json.loads(files[only(files, r"asymptotics_[0-9a-f]{16}\.json")])
    plus, minus = doc["cross_validation"]
    assert plus["fitted_order"] <= -2.5 and minus["fitted_order"] <= -1.2
    gaps = [g["gap"] for g in doc["pairing_gap"]]
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_asymptotics_bad_regime(tmp_path):
    res = run_cli(tmp_path, "asymptotics", {"cases": [{"regime": "sideways", "mu": [1, 2, 3]}]})
    assert res.returncode == 1


def test_propagate_quasi_contact(tmp_path):
    cfg = {"model": "quasi_contact", "packet": {"bump_eta": {"center": 0.75, "half_width": 0.25},
                                                "sigma_max": 400}, "strict": True}
    res = run_cli(tmp_path, "propagate", cfg, "a")
    assert res.returncode == 0, res.stderr
    files = outputs(tmp_path, "a")
    doc = json.loads(files[only(files, r"front_[0-9a-f]{16}\.json")])
    assert doc["speed"] == pytest.approx(0.6, rel=0.03)
    assert run_cli(tmp_path, "propagate", cfg, "b").returncode == 0
    assert outputs(tmp_path, "b") == files


@pytest.mark.slow
def test_propagate_strict_failure_exits_three(tmp_path):
    cfg = {"packet": {"bump": {"center": 5.0, "half_width": 0.25}, "zeta_max": 2000}, "strict": True}
    res = run_cli(tmp_path, "propagate", cfg)
    assert res.returncode == 3
    assert "invariant failure" in res.stderr


def test_nonconvergence_exits_two(tmp_path):
    res = run_cli(tmp_path, "eigen", {"mu": [0.37], "tol": 1e-30})
    assert res.returncode == 2
    assert "not converged" in res.stderr


def test_probe(tmp_path):
    cfg = {"packet": {"bump": {"center": 0.0, "half_width": 1.0}, "zeta_max": 500},
           "rays": [{"kind": "core", "a": 0.5, "b": 0.2, "t": 1, "samples": [10, 100, 1000]},
                    {"kind": "cone", "direction": [1, 0, 1], "samples": [10, 31.6, 100, 316, 1000]}],
           "stationary_phase": [{"t": 1, "c": 0, "zeta": [64000, 640000]}]}
    res = run_cli(tmp_path, "probe", cfg, "a")
    assert res.returncode == 0, res.stderr
    files = outputs(tmp_path, "a")
    doc = json.loads(files[only(files, r"probe_[0-9a-f]{16}\.json")])
    core, cone = doc["rays"]
    assert np.ptp(core["scaled_magnitudes"]) <= 1e-6 * np.mean(core["scaled_magnitudes"])
    assert cone["fitted_exponent"] <= -6
    assert run_cli(tmp_path, "probe", cfg, "b").returncode == 0
    assert outputs(tmp_path, "b") == files
