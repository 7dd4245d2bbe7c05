import json
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from visionped.cli import main
from visionped.errors import MismatchedConfigs
from visionped.interaction import VisionParams
from visionped.output import read_grid, read_series
from visionped.runner import compare_runs, load_report, run
from visionped.scenario import RunConfig, RunSettings, Scenario
from visionped.socialforce import SocialForceParams

DT = 0.0042


def small(tmp_path, name="run", model="vision_nonlocal", t_end=3.0, **kw):
    settings = RunSettings(t_end=t_end, snapshot_every=1.0, output_dir=str(tmp_path / name),
                           psi_cache_dir=str(tmp_path / "cache"))
    return RunConfig(model=model, dt=DT, run=replace(settings, **kw.pop("run", {})), **kw)


def test_single_particle_runs_straight_to_exit(tmp_path):
    cfg = small(tmp_path, t_end=45.0, scenario=Scenario(counts=(1, 0)))
    rep = run(cfg)
    assert rep.status == "ok" and rep.n_evacuated == 1
    # from (0.84, y) straight to the goal at (50, 10)
    y0 = Scenario().band()[2][2] + 0.84
    dist = np.hypot(50 - 0.84, 10 - y0)
    assert rep.completion_time == pytest.approx(dist / 1.5, abs=2 * DT)
    assert rep.runtime_s < 1.0
    assert rep.min_separation == np.inf and rep.to_dict()["min_separation"] is None


def test_run_outputs(tmp_path):
    cfg = small(tmp_path)
    rep = run(cfg)
    out = tmp_path / "run"
    snaps = sorted((out / "snapshots").glob("snap_*.csv"))
    grids = sorted((out / "density").glob("density_*.txt"))
    assert len(snaps) == len(grids) == 4  # t = 0, 1, 2, 3
    assert not (out / "FAILED").exists()
    assert RunConfig.load(out / "config.yaml") == cfg
    head = snaps[0].read_text().splitlines()
    assert head[0] == "t,particle_id,group,x,y,ux,uy,rho,active" and len(head) == 81
    grid, meta = read_grid(grids[-1])
    assert grid.shape == (40, 100) and meta["nx"] == 100 and meta["t"] == pytest.approx(3.0, abs=DT)
    t, ratio = read_series(out / "evacuation.csv")
    np.testing.assert_allclose(t, [0, 1, 2, 3], atol=DT)
    # the in-loop series equals the ratio recomputed from the snapshot files
    from_snaps = [np.loadtxt(p, delimiter=",", skiprows=1)[:, 8].sum() / 80 for p in snaps]
    assert ratio.tolist() == from_snaps == rep.series_ratio
    d = json.loads((out / "report.json").read_text())
    assert d["steps"] == rep.steps == round(3.0 / DT)
    assert d["config_hash"] == cfg.content_hash() and d["params"] == cfg.to_dict()


def test_single_snapshot_file(tmp_path):
    cfg = small(tmp_path, t_end=1.0, run={"single_snapshot_file": True})
    run(cfg)
    rows = (tmp_path / "run" / "snapshots.csv").read_text().splitlines()
    assert rows[0].startswith("t,particle_id") and len(rows) == 1 + 2 * 80


def test_failure_leaves_marker_and_partial_output(tmp_path):
    cfg = small(tmp_path)

    def boom(st):
        if st.t > 1.5:
            raise RuntimeError("stop here")

    with pytest.raises(RuntimeError):
        run(cfg, progress=boom)
    out = tmp_path / "run"
    assert "stop here" in (out / "FAILED").read_text()
    rep = load_report(out)
    assert rep["status"] == "failed" and rep["t_final"] < 2.0
    assert len(read_series(out / "evacuation.csv")[0]) == 2
    # a clean rerun removes the marker
    run(cfg)
    assert not (out / "FAILED").exists()


def test_other_models_run(tmp_path):
    local = small(tmp_path, "local", model="vision_local", t_end=0.5, vision=VisionParams(lam=1e-2))
    assert run(local).status == "ok"
    assert len(list((tmp_path / "cache").glob("*.npz"))) == 1
    sf = small(tmp_path, "sf", model="social_force", t_end=0.5, social_force=SocialForceParams())
    rep = run(sf)
    assert rep.status == "ok" and rep.model == "social_force"
    snap = np.loadtxt(tmp_path / "sf" / "snapshots" / "snap_00000.csv", delimiter=",", skiprows=1)
    assert np.all(snap[:, 5:7] == 0)  # social-force walkers start at rest


def test_compare(tmp_path):
    a = run(small(tmp_path, "a"))
    b = run(small(tmp_path, "b"))
    same = compare_runs([tmp_path / "a", tmp_path / "a"])
    assert [r["runtime_ratio"] for r in same["runs"]] == [1.0, 1.0]
    table = compare_runs([tmp_path / "a", tmp_path / "b" / "report.json"])
    assert table["ratios"][0] == table["ratios"][1] == a.series_ratio == b.series_ratio
    assert table["runs"][0]["completion_time"] == table["runs"][1]["completion_time"]
    run(small(tmp_path, "c", t_end=2.0))
    with pytest.raises(MismatchedConfigs):
        compare_runs([tmp_path / "a", tmp_path / "c"])
    run(small(tmp_path, "d", run={"snapshot_every": 0.5}))
    with pytest.raises(MismatchedConfigs):
        compare_runs([tmp_path / "a", tmp_path / "d"])


def test_cli(tmp_path, capsys):
    cfg = small(tmp_path, t_end=1.0)
    path = tmp_path / "cfg.yaml"
    cfg.dump(path)
    assert main(["validate", str(path)]) == 0
    assert "80 particles" in capsys.readouterr().out
    assert main(["run", str(path), "--out-dir", str(tmp_path / "x"), "--seed", "3", "--threads", "1"]) == 0
    assert main(["run", str(path), "--out-dir", str(tmp_path / "y")]) == 0
    rep = load_report(tmp_path / "x")
    assert rep["params"]["scenario"]["seed"] == 3
    assert main(["compare", str(tmp_path / "x"), str(tmp_path / "y"), "-o", str(tmp_path / "cmp.json")]) == 0
    assert len(json.loads((tmp_path / "cmp.json").read_text())["runs"]) == 2

    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 1\nmodel: nope\n")
    assert main(["validate", str(bad)]) == 2
    assert main(["compare", str(tmp_path / "x"), str(tmp_path / "missing")]) == 2
    short = small(tmp_path, "s", t_end=0.5)
    short.dump(tmp_path / "short.yaml")
    assert main(["run", str(tmp_path / "short.yaml"), "--out-dir", str(tmp_path / "z")]) == 0
    assert main(["compare", str(tmp_path / "x"), str(tmp_path / "z")]) == 11
    # psi-table needs lambda > 0
    assert main(["psi-table", str(path)]) == 2
    loc = small(tmp_path, model="vision_local", vision=VisionParams(lam=1e-1))
    loc.dump(tmp_path / "loc.yaml")
    assert main(["psi-table", str(tmp_path / "loc.yaml"), "-o", str(tmp_path / "psi.npz")]) == 0
    assert (tmp_path / "psi.npz").exists()


def test_module_entry_point(tmp_path):
    cfg = small(tmp_path, t_end=1.0)
    cfg.dump(tmp_path / "cfg.yaml")
    res = subprocess.run([sys.executable, "-m", "visionped", "validate", str(tmp_path / "cfg.yaml")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("ok:")
    res = subprocess.run([sys.executable, "-m", "visionped", "validate", str(tmp_path / "nope.yaml")],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "ConfigError" in res.stderr
