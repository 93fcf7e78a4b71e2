import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from chemolab.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_simulate_equilibrium(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "equilibrium.toml"), "--out", str(tmp_path)]) == 0
    ts = np.genfromtxt(tmp_path / "timeseries.csv", delimiter=",", names=True)
    assert np.ptp(ts["u_inf"]) < 1e-9
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["schema_version"] == "1.0"
    assert summary["classification"]["verdict"] == "Bounded"
    assert (tmp_path / "snapshots" / "final.csv").exists()
    assert (tmp_path / "config.toml").exists()
    snaps = json.loads((tmp_path / "snapshots.json").read_text())
    assert len(snaps["r_center"]) == 64


def test_simulate_blowup_config(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "blowup.toml"), "--out", str(tmp_path)]) == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    cls = summary["classification"]
    assert cls["verdict"] == "BlowupSuspected" and cls["t_detect"] > 0
    assert summary["analysis"]["riccati_bound"] >= cls["t_estimate"]
    assert summary["analysis"]["hypotheses"]["all_pass"]


def test_pure_power_without_override_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[model]\ndiffusion = "purepower"\nm = -0.5\n')
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "m_bar" in capsys.readouterr().err


def test_malformed_key_is_named(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[grid]\ncelz = 10\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "celz" in capsys.readouterr().err


def _mini_config(tmp_path):
    cfg = tmp_path / "mini.toml"
    cfg.write_text("[model]\nchi = 2.0\n[initial]\nr_star = 0.6\n[grid]\ncells = 32\n[control]\nt_end = 0.3\n")
    return cfg


def test_sweep_is_deterministic_across_widths(tmp_path):
    cfg = _mini_config(tmp_path)
    args = ["sweep", "--config", str(cfg), "--axis", "m=0.5:2.0:0.5", "--axis", "model.chi=1:2:1"]
    assert main(args + ["--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    a = (tmp_path / "a" / "phase.csv").read_bytes()
    assert a == (tmp_path / "b" / "phase.csv").read_bytes()
    assert a.decode().splitlines()[0].startswith("cell,replicate,m,chi,regime,verdict")


def test_single_cell_sweep_matches_simulate(tmp_path):
    cfg = _mini_config(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert main(["sweep", "--config", str(cfg), "--axis", "m=0.5:0.5:1", "--out", str(tmp_path / "w")]) == 0
    summary = json.loads((tmp_path / "s" / "summary.json").read_text())
    header, row = (tmp_path / "w" / "phase.csv").read_text().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert rec["verdict"] == summary["classification"]["verdict"]
    assert float(rec["sup_u_inf"]) == summary["classification"]["sup_u_inf"]
    assert int(rec["steps"]) == summary["steps"]["accepted"]


def test_verify_suites(capsys):
    assert main(["verify", "transform"]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["verify", "no-such-suite"]) == 1


def test_console_script_and_log_variable(tmp_path):
    env = {**os.environ, "CHEMOLAB_LOG": "INFO"}
    proc = subprocess.run(
        [sys.executable, "-m", "chemolab.cli", "simulate", "--config", str(_mini_config(tmp_path)), "--out", str(tmp_path / "o")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0
    assert "run finished" in proc.stderr
