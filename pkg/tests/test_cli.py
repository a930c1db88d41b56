import json
import math
import os

import numpy as np
import pytest

from vplk import cli
from vplk.io import read_csv, read_snapshot

SMALL = "[grid]\nnv = 8\nvcut = 4.0\nnx = 8\n[scheme]\nsteps = {steps}\n[initial]\nepsilon = {eps}\n" \
        "[output]\nsnapshot_every = {snap}\n"


def write_cfg(tmp_path, steps=4, eps=1e-3, snap=0, name="c.cfg"):
    p = tmp_path / name
    p.write_text(SMALL.format(steps=steps, eps=eps, snap=snap))
    return str(p)


def test_run_zero_epsilon(tmp_path, capsys):
    out = tmp_path / "z"
    assert cli.main(["run", "--config", write_cfg(tmp_path, eps=0.0), "--out", str(out)]) == 0
    data = read_csv(out / "run.csv")
    assert len(data["t"]) == 5
    for k, v in data.items():
        if k not in ("t", "min_F"):
            assert np.all(np.abs(v) <= 1e-12), k
    summary = json.loads((out / "summary.json").read_text())
    assert summary["ledger_flags"] == 0 and summary["error"] is None
    assert (out / "config.txt").exists()


def test_run_writes_snapshots_and_norms(tmp_path):
    out = tmp_path / "s"
    assert cli.main(["run", "--config", write_cfg(tmp_path, steps=2, snap=1), "--out", str(out)]) == 0
    snaps = sorted(p for p in os.listdir(out) if p.endswith(".vplk"))
    assert len(snaps) == 3
    s = read_snapshot(out / snaps[-1])
    assert s.tag == "sd" and s.t > 0
    cfg = write_cfg(tmp_path, steps=2)
    assert cli.main(["norms", "--config", cfg, "--out", str(out)] + [str(out / p) for p in snaps]) == 0
    rows = json.loads((out / "norms.json").read_text())
    assert len(rows) == 3 and all(r["E"] > 0 for r in rows)
    assert rows[0]["macro_micro"]["pythagoras_residual"] <= 1e-12


def test_malformed_config_creates_nothing(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[grid]\nnv = 7\n[scheme]\ndt = -1\n")
    out = tmp_path / "never"
    assert cli.main(["run", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()
    err = capsys.readouterr().err
    assert "grid.nv" in err and "scheme.dt" in err


def test_positivity_rejected(tmp_path, capsys):
    out = tmp_path / "never"
    assert cli.main(["run", "--config", write_cfg(tmp_path, eps=10.0), "--out", str(out)]) == 2
    assert "largest admissible" in capsys.readouterr().err
    assert not out.exists()


def test_fit_synthetic(tmp_path):
    t = np.linspace(0, 40, 200)
    from vplk.io import write_csv
    write_csv(tmp_path / "s.csv", {"t": t, "y": (1 + t) ** -3.0})
    assert cli.main(["fit", str(tmp_path / "s.csv"), "--channel", "y", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "fit.json").read_text())
    assert abs(res["params"]["exponent"] + 3) <= 0.01
    assert res["model"] == "power" and len(res["window"]) == 2


def test_fit_missing_channel(tmp_path, capsys):
    from vplk.io import write_csv
    write_csv(tmp_path / "s.csv", {"t": [0.0, 1.0], "y": [1.0, 0.5]})
    assert cli.main(["fit", str(tmp_path / "s.csv"), "--channel", "nope"]) == 2
    assert "available: t, y" in capsys.readouterr().err
    assert cli.main(["fit", str(tmp_path / "missing.csv"), "--channel", "y"]) == 2


def test_usage_errors(tmp_path):
    assert cli.main([]) == 2
    assert cli.main(["check", "nosuch", "--out", str(tmp_path)]) == 2
    assert cli.main(["norms", "--out", str(tmp_path)]) == 2
    assert cli.main(["norms", str(tmp_path / "missing.vplk")]) == 2


def test_check_interpolation_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["check", "interpolation", "--seed", "3", "--out", str(a)]) == 0
    assert cli.main(["check", "--suite", "interpolation", "--seed", "3", "--out", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert "PASS interpolation/" in capsys.readouterr().out
