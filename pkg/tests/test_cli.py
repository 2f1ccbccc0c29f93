import json

import pytest

from boltzlayer.cli import main

CFG = {"modes": [[0.5, 0.0], [-0.5, 0.0]], "velocity": {"n": 8, "vmax": 5}, "dt": 0.01,
       "t_end": 0.2, "Nx": 16, "cadence": 2, "probes": [0.0, 0.5]}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CFG))
    return p


def test_simulate_writes_manifest(tmp_path, cfg_path, cache_dir):
    out = tmp_path / "run"
    assert main(["simulate", str(cfg_path), "-o", str(out), "--cache-dir", str(cache_dir),
                 "-s", "Nx=8"]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["Nx"] == 8
    assert man["operator_hash"] and len(man["modes"]) == 2
    assert (out / "mode_000.csv").exists()


def test_simulate_config_error_exit(tmp_path, cfg_path):
    assert main(["simulate", str(cfg_path), "-o", str(tmp_path / "r"), "-s", "dt=0"]) == 2
    assert main(["simulate", str(tmp_path / "missing.json"), "-o", str(tmp_path / "r")]) == 2


def test_decay_fit_and_assemble(tmp_path, cfg_path, cache_dir, capsys):
    out = tmp_path / "run"
    main(["simulate", str(cfg_path), "-o", str(out), "--cache-dir", str(cache_dir)])
    capsys.readouterr()
    assert main(["decay-fit", str(out / "mode_000.csv")]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["k"] == [0.5, 0.0] and res["rate"] > 0
    asm = tmp_path / "phys.csv"
    assert main(["assemble", str(out), "--xbar", "0,0", "--xbar", "1.5,0", "-o", str(asm)]) == 0
    lines = asm.read_text().splitlines()
    assert lines[0].startswith("t,xbar1,xbar2,x3,a")
    assert len(lines) == 1 + 2 * 11 * 16


def test_mc_cycles(capsys):
    assert main(["mc-cycles", "--T0", "10", "--n", "1", "--samples", "20000"]) == 0
    res = json.loads(capsys.readouterr().out)
    assert set(res) >= {"T0", "n", "samples", "p_hat", "stderr", "resamples"}
    assert main(["mc-cycles", "--T0", "-1"]) == 2


def test_cache_ops(tmp_path, capsys):
    assert main(["cache-ops", "path", "--dir", str(tmp_path), "--n", "4", "--vmax", "4"]) == 0
    assert main(["cache-ops", "build", "--dir", str(tmp_path), "--n", "4", "--vmax", "4",
                 "--sphere", "4", "8"]) == 0
    capsys.readouterr()
    assert main(["cache-ops", "list", "--dir", str(tmp_path)]) == 0
    assert len(json.loads(capsys.readouterr().out)["entries"]) == 1
    assert main(["cache-ops", "clear", "--dir", str(tmp_path)]) == 0


def test_verify_passes(cache_dir, tmp_path):
    assert main(["verify", "--cache-dir", str(cache_dir), "-o", str(tmp_path / "v.json")]) == 0
    assert json.loads((tmp_path / "v.json").read_text())["passed"]


def test_numeric_failure_exit(tmp_path, cache_dir):
    import numpy as np
    bad = tmp_path / "bad.npy"
    arr = np.zeros((8, 512), dtype=complex)
    arr[2, 5] = np.nan
    np.save(bad, arr)
    cfg = dict(CFG, Nx=8, initial={"kind": "file", "path": str(bad)})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["simulate", str(p), "-o", str(tmp_path / "r"), "--cache-dir", str(cache_dir)]) == 3
