import math
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vplk.config import ConfigError, RunConfig, load_config, parse_config, serialize_config
from vplk.grid import SpatialGrid, build_velocity_grid
from vplk.io import HEADER, SnapshotError, read_csv, read_snapshot, write_csv, write_snapshot


@pytest.fixture
def grids():
    return build_velocity_grid(4, 3.0), SpatialGrid(1, 6, 2 * math.pi)


def test_snapshot_round_trip(tmp_path, grids, rng):
    vg, xg = grids
    vals = rng.standard_normal((2,) + xg.shape + vg.shape)
    p = tmp_path / "a.vplk"
    write_snapshot(p, vals, vg, xg, "sd", t=1.25)
    s = read_snapshot(p)
    assert s.tag == "sd" and s.t == 1.25 and s.nv == 4 and s.nx == 6
    assert np.array_equal(s.values, vals)
    vg2, xg2 = s.grids()
    assert np.array_equal(vg2.v, vg.v)
    assert xg2.box_length == xg.box_length
    assert os.path.getsize(p) == HEADER.size + 8 * vals.size
    assert not os.path.exists(f"{p}.tmp")


def test_snapshot_velocity_only(tmp_path, grids):
    vg, _ = grids
    p = tmp_path / "v.vplk"
    write_snapshot(p, vg.sqrt_mu, vg)
    s = read_snapshot(p)
    assert s.dimx == 0 and s.values.shape == (1,) + vg.shape
    with pytest.raises(SnapshotError):
        s.phase_field()


def test_snapshot_errors(tmp_path, grids):
    vg, xg = grids
    p = tmp_path / "b.vplk"
    with pytest.raises(SnapshotError):
        write_snapshot(p, np.zeros((2, 5) + vg.shape), vg, xg, "sd")
    with pytest.raises(SnapshotError):
        write_snapshot(p, np.zeros((3,) + xg.shape + vg.shape), vg, xg, "pm")
    with pytest.raises(SnapshotError):
        write_snapshot(p, np.zeros(xg.shape + vg.shape), vg, xg, "xx")
    write_snapshot(p, np.zeros((2,) + xg.shape + vg.shape), vg, xg, "pm")
    raw = bytearray(p.read_bytes())
    (tmp_path / "short.vplk").write_bytes(raw[:-8])
    with pytest.raises(SnapshotError, match="payload"):
        read_snapshot(tmp_path / "short.vplk")
    raw[:4] = b"XXXX"
    (tmp_path / "magic.vplk").write_bytes(raw)
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot(tmp_path / "magic.vplk")
    raw[:4] = b"VPLK"
    struct.pack_into("<H", raw, 4, 99)
    (tmp_path / "ver.vplk").write_bytes(raw)
    with pytest.raises(SnapshotError, match="version"):
        read_snapshot(tmp_path / "ver.vplk")


def test_csv_round_trip(tmp_path):
    cols = {"t": np.array([0.0, 0.1, 1 / 3]), "x": np.array([1e-300, -2.5, math.pi])}
    p = tmp_path / "r.csv"
    write_csv(p, cols)
    back = read_csv(p)
    for k in cols:
        assert np.array_equal(back[k], cols[k])
    with pytest.raises(ValueError):
        write_csv(p, {"a": [1, 2], "b": [1]})


def test_config_defaults_round_trip():
    cfg = RunConfig().validate()
    assert parse_config(serialize_config(cfg)) == cfg


@given(st.integers(1, 8).map(lambda k: 2 * k), st.floats(1.0, 10.0), st.floats(1e-6, 1e-2),
       st.sampled_from(["a", "b", "c"]), st.floats(0.01, 1.0))
@settings(max_examples=30, deadline=None)
def test_config_round_trip(nv, vcut, eps, fam, cfl):
    cfg = RunConfig(nv=nv, vcut=vcut, epsilon=eps, family=fam, cfl=cfl).validate()
    assert parse_config(serialize_config(cfg)) == cfg


def test_config_errors_consolidated():
    text = "[grid]\nnv = 7\nvcut = -1\nbogus = 3\n[nope]\nx = 1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    probs = exc.value.problems
    assert any("unknown key grid.bogus" in p for p in probs)
    assert any("unknown section [nope]" in p for p in probs)
    with pytest.raises(ConfigError) as exc:
        parse_config("[grid]\nnv = 7\nvcut = -1\n[scheme]\ndt = fast\n")
    assert len(exc.value.problems) == 3


def test_config_parse_errors(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("no section header\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("[grid]\nnv = sixteen\n")
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")
    p = tmp_path / "ok.cfg"
    p.write_text("[scheme]\ndt = 0.01  # fixed step\nsteps = 3\n")
    cfg = load_config(p)
    assert cfg.dt == "0.01" and cfg.steps == 3
