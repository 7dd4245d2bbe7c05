"""Batch runs: time loop, output files and run comparison.

Output directory layout::

    config.yaml            the effective config
    snapshots/snap_00000.csv ...   (or snapshots.csv when single_snapshot_file)
    density/density_00000.txt ...
    evacuation.csv         t,ratio at every snapshot time
    report.json            runtime, completion time, config echo and hash
    FAILED                 only present if the run raised
"""
from __future__ import annotations

import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from numba import njit

from .dynamics import Mode, VisionModel, step
from .errors import ConfigError, MismatchedConfigs
from .local_field import cached_psi_table, scale_params
from .output import (SNAPSHOT_HEADER, density_grid, read_series, snapshot_rows, write_grid,
                     write_json, write_series)
from .scenario import RunConfig, seed_particles
from .socialforce import SfState, SocialForceModel


@dataclass
class RunReport:
    status: str
    model: str
    t_end: float
    t_final: float
    steps: int
    n_particles: int
    n_evacuated: int
    completion_time: float | None
    runtime_s: float
    min_separation: float
    min_separation_cross: float
    config_hash: str
    output_dir: str
    series_t: list = field(default_factory=list, repr=False)
    series_ratio: list = field(default_factory=list, repr=False)
    error: str | None = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if not k.startswith("series_")}
        for k in ("min_separation", "min_separation_cross"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


@njit(cache=True)
def _min_separation(pos, group, active):
    best = np.inf
    cross = np.inf
    n = pos.shape[0]
    for i in range(n):
        if not active[i]:
            continue
        for j in range(i + 1, n):
            if not active[j]:
                continue
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            d = math.sqrt(dx * dx + dy * dy)
            if d < best:
                best = d
            if group[i] != group[j] and d < cross:
                cross = d
    return best, cross


class _Stepper:
    """Uniform view over the vision and social-force models."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        sc = cfg.scenario
        self.domain = sc.domain()
        init = seed_particles(sc)
        if cfg.model == "social_force":
            self.sf = SocialForceModel(cfg.social_force, cfg.weights, self.domain)
            self.state = SfState.at_rest(init.pos, init.rho, init.group)
        else:
            self.sf = None
            table = None
            if cfg.model == Mode.VISION_LOCAL.value:
                table = build_table(cfg)
            self.model = VisionModel(cfg.vision, cfg.weights, self.domain, sc.spacing, table)
            self.step_cfg = cfg.step_config()
            self.state = init

    def advance(self):
        if self.sf is not None:
            self.state = self.sf.step(self.state, self.cfg.dt)
        else:
            self.state = step(self.state, self.step_cfg, self.model)


def build_table(cfg: RunConfig):
    return cached_psi_table(scale_params(cfg.vision), cfg.weights.h, cfg.run.psi_cache_dir)


class _Writer:
    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.k = 0
        self.series_t: list[float] = []
        self.series_r: list[float] = []
        (out / "density").mkdir(parents=True, exist_ok=True)
        if cfg.run.single_snapshot_file:
            self.snap_fh = open(out / "snapshots.csv", "w")
            self.snap_fh.write(SNAPSHOT_HEADER + "\n")
        else:
            (out / "snapshots").mkdir(exist_ok=True)
            self.snap_fh = None

    def snapshot(self, st, n0: int):
        cfg = self.cfg
        dirs = st.dir
        rows = snapshot_rows(st.t, st.pos, dirs, st.rho, st.group, st.active)
        if self.snap_fh is not None:
            self.snap_fh.write(rows)
        else:
            with open(self.out / "snapshots" / f"snap_{self.k:05d}.csv", "w") as fh:
                fh.write(SNAPSHOT_HEADER + "\n" + rows)
        sc = cfg.scenario
        grid = density_grid(st.pos, st.rho, st.group, st.active, sc.width, sc.height,
                            cfg.run.density_grid_dx, cfg.weights)
        write_grid(self.out / "density" / f"density_{self.k:05d}.txt", grid, st.t, cfg.run.density_grid_dx)
        self.series_t.append(st.t)
        self.series_r.append(st.n_active / n0)
        self.k += 1

    def close(self):
        if self.snap_fh is not None:
            self.snap_fh.close()
        write_series(self.out / "evacuation.csv", self.series_t, self.series_r)


def _set_threads(n: int) -> None:
    # all kernels are serial per particle, so results do not depend on this
    # pick the layer before anything launches the pool; the bundled TBB may be too old
    numba.config.THREADING_LAYER = "workqueue"
    if n > 0 and n != numba.get_num_threads():
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def run(cfg: RunConfig, progress=None) -> RunReport:
    """Run ``cfg`` to ``t_end`` (or until everyone has left) and write outputs.

    Only the stepping is timed; snapshot and density output is excluded.
    ``progress(state)`` is called after every step if given.
    """
    _set_threads(cfg.run.threads)
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    cfg.dump(out / "config.yaml")

    stepper = _Stepper(cfg)
    st = stepper.state
    n0 = len(st)
    writer = _Writer(cfg, out)
    dt = cfg.dt
    every = cfg.run.snapshot_every
    t_end = cfg.run.t_end
    runtime = 0.0
    steps = 0
    min_sep, min_cross = _min_separation(st.pos, st.group, st.active)
    writer.snapshot(st, n0)
    next_snap = 1
    status, err = "ok", None
    try:
        while st.t < t_end - 0.5 * dt:
            if cfg.run.stop_when_empty and st.n_active == 0:
                break
            t0 = time.perf_counter()
            stepper.advance()
            runtime += time.perf_counter() - t0
            st = stepper.state
            steps += 1
            a, b = _min_separation(st.pos, st.group, st.active)
            min_sep = min(min_sep, a)
            min_cross = min(min_cross, b)
            if progress is not None:
                progress(st)
            if st.t >= next_snap * every - 0.5 * dt or st.n_active == 0:
                writer.snapshot(st, n0)
                while next_snap * every <= st.t + 0.5 * dt:
                    next_snap += 1
    except Exception as exc:
        status = "failed"
        err = f"{type(exc).__name__}: {exc}"
        (out / "FAILED").write_text(err + "\n" + traceback.format_exc())
        _finish(cfg, out, writer, stepper.state, n0, steps, runtime, min_sep, min_cross, status, err)
        raise
    return _finish(cfg, out, writer, st, n0, steps, runtime, min_sep, min_cross, status, err)


def _finish(cfg, out, writer, st, n0, steps, runtime, min_sep, min_cross, status, err) -> RunReport:
    if writer.series_t and writer.series_t[-1] != st.t and status == "ok":
        writer.snapshot(st, n0)
    writer.close()
    ev = np.asarray(st.evac_time)
    done = st.n_active == 0
    rep = RunReport(
        status=status, model=cfg.model, t_end=cfg.run.t_end, t_final=float(st.t), steps=steps,
        n_particles=n0, n_evacuated=int(np.isfinite(ev).sum()),
        completion_time=float(np.nanmax(ev)) if done and n0 else None,
        runtime_s=runtime, min_separation=float(min_sep), min_separation_cross=float(min_cross),
        config_hash=cfg.content_hash(), output_dir=str(out),
        series_t=list(writer.series_t), series_ratio=list(writer.series_r), error=err,
    )
    d = rep.to_dict()
    d["snapshot_every"] = cfg.run.snapshot_every
    d["params"] = cfg.to_dict()
    write_json(out / "report.json", d)
    return rep


# --- comparison --------------------------------------------------------------


def load_report(path) -> dict:
    import json

    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    try:
        rep = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc
    rep["_path"] = str(path)
    return rep


def compare_runs(reports: list) -> dict:
    """Align evacuation series and tabulate completion and runtime ratios.

    ``reports`` are report dicts (as written to ``report.json``) or paths.
    Runtime ratios are relative to the first report.
    """
    reps = [load_report(r) if not isinstance(r, dict) else r for r in reports]
    if len(reps) < 2:
        raise ConfigError("compare needs at least two reports")
    t_end = {r["t_end"] for r in reps}
    every = {r["snapshot_every"] for r in reps}
    if len(t_end) > 1 or len(every) > 1:
        raise MismatchedConfigs(f"reports differ in t_end {sorted(t_end)} or snapshot cadence {sorted(every)}")
    series = []
    for r in reps:
        base = Path(r.get("_path", Path(r["output_dir"]) / "report.json")).parent
        series.append(read_series(base / "evacuation.csv"))
    grid_t = max((s[0] for s in series), key=len)
    aligned = []
    for t, ratio in series:
        # runs that stopped early keep their last value (0 once everyone has left)
        aligned.append([float(ratio[min(k, len(ratio) - 1)]) for k in range(len(grid_t))])
    base_rt = reps[0]["runtime_s"]
    rows = []
    for r in reps:
        rows.append({
            "name": Path(r.get("_path", r["output_dir"])).parent.name if "_path" in r else r["output_dir"],
            "model": r["model"],
            "completion_time": r["completion_time"],
            "runtime_s": r["runtime_s"],
            "runtime_ratio": r["runtime_s"] / base_rt if base_rt > 0 else None,
            "config_hash": r["config_hash"],
        })
    return {"t": [float(x) for x in grid_t], "ratios": aligned, "runs": rows}
