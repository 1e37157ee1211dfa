import cmath
import json
import math

import numpy as np
import pytest

import eeqt


def test_free_barrier_is_a_phase():
    t = eeqt.transmission_amplitude(5.0, 0.0, 7.0)
    k = math.sqrt(5.0 / 3.80998)
    assert abs(t - cmath.exp(1j * k * 7.0)) < 1e-12


def test_clocks_reduce_to_free_flight():
    free = eeqt.free_flight_time(5.0, 27.5)
    for clock in (eeqt.phase_time, eeqt.semiclassical_time, eeqt.larmor_time):
        assert clock(5.0, 0.0, 10.0, -12.5, 15.0) == pytest.approx(free, rel=1e-9)


def test_ifs_maps_stay_on_the_sphere():
    r = np.array([0.3, -0.4, 0.5])
    r /= np.linalg.norm(r)
    for i in range(4):
        assert np.linalg.norm(eeqt.ifs_map(r.tolist(), i, 0.7)) == pytest.approx(1.0, abs=1e-12)
    assert sum(eeqt.ifs_probs(r.tolist(), 0.7)) == pytest.approx(1.0, abs=1e-12)
    n = eeqt.tetra_directions()
    assert n.shape == (4, 3)
    assert np.allclose(eeqt.ifs_map(n[0].tolist(), 0, 0.7), n[0])


def test_chaos_game_is_reproducible():
    a = eeqt.chaos_game(0.7, 2000, seed=3)
    b = eeqt.chaos_game(0.7, 2000, seed=3)
    assert a.shape == (2000, 3)
    assert np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)
    fit = eeqt.box_counting_dimension(eeqt.chaos_game(0.7, 100000, seed=3))
    assert 0.0 < fit["dimension"] < 2.5


def test_validate_small_toy():
    res = eeqt.validate({"toy": {"trajectories": 300, "samples": 5, "periods": 2.0, "dt_factor": 0.005}}, seed=1)
    assert res["pass"]
    assert {r["observable"] for r in res["report"]} >= {"sigma_x", "sigma_z"}


def test_bad_config_raises():
    with pytest.raises(eeqt.ConfigError):
        eeqt.validate({"toy": {"bogus": 1}})
    with pytest.raises(ValueError):
        eeqt.run("nonsense", {}, "/tmp/eeqt_py_nonsense")
    with pytest.raises(ValueError):
        eeqt.box_counting_dimension(np.zeros((10, 2)))


def test_tunnel_scan_and_workflow(tmp_path):
    cfg = {
        "barrier": {"v0_ev": 0.0, "d_angstrom": 5.0},
        "packet": {"x0_angstrom": -130.0},
        "numerics": {"t_cut_fs": 30.0},
        "scan": {"parameter": "height", "values": [0.0], "trajectories": 40},
    }
    rows = eeqt.tunnel_scan(cfg, seed=5)
    assert len(rows) == 1
    assert rows[0]["stats"]["n"] == 40
    assert eeqt.run("tunnel", cfg, tmp_path, seed=5) == eeqt.EXIT_OK
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    files = {f["path"]: f["sha256"] for f in manifest["files"]}
    assert files["scan.csv"] == eeqt.sha256_file(str(tmp_path / "scan.csv"))
    assert eeqt.load_config(tmp_path / "manifest.json")["scan"]["trajectories"] == 40
