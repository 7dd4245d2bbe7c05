"""Plain-text writers for snapshots, density grids and evacuation series."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .meshfree import WeightParams, shepard_grid

SNAPSHOT_HEADER = "t,particle_id,group,x,y,ux,uy,rho,active"


def density_grid(pos, rho, group, active, width: float, height: float, grid_dx: float,
                 wp: WeightParams) -> np.ndarray:
    """Cell-centered (ny, nx) density: per-group Shepard interpolants, summed."""
    nx = max(1, int(round(width / grid_dx)))
    ny = max(1, int(round(height / grid_dx)))
    out = np.zeros((ny, nx))
    group = np.asarray(group)
    active = np.asarray(active, bool)
    if len(group) == 0:
        return out
    for g in np.unique(group[active]):
        m = active & (group == g)
        out += shepard_grid(pos, rho, m, (0.0, 0.0), grid_dx, (ny, nx), wp)
    return out


def snapshot_rows(t: float, pos, dirs, rho, group, active) -> str:
    lines = []
    for i in range(len(pos)):
        lines.append(f"{t:.6f},{i},{group[i]},{pos[i, 0]:.10g},{pos[i, 1]:.10g},"
                     f"{dirs[i, 0]:.10g},{dirs[i, 1]:.10g},{rho[i]:.10g},{int(active[i])}")
    return "\n".join(lines) + ("\n" if lines else "")


def write_grid(path, grid: np.ndarray, t: float, dx: float) -> None:
    """Matrix with rows from y = 0 upwards; ``np.loadtxt`` skips the header."""
    ny, nx = grid.shape
    header = f"t {t:.6f}\nnx {nx}\nny {ny}\ndx {dx:g}"
    np.savetxt(path, grid, fmt="%.8g", header=header, comments="# ")


def read_grid(path):
    """Returns ``(grid, meta)`` for a file written by :func:`write_grid`."""
    meta = {}
    with open(path) as fh:
        for _ in range(4):
            key, val = fh.readline()[2:].split()
            meta[key] = float(val) if key in ("t", "dx") else int(val)
    return np.loadtxt(path, ndmin=2), meta


def write_series(path, t, ratio) -> None:
    with open(path, "w") as fh:
        fh.write("t,ratio\n")
        for a, b in zip(t, ratio):
            fh.write(f"{a:.6f},{b:.10g}\n")


def read_series(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
