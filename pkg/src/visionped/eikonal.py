"""First-order fast marching for |grad phi| = 1 / F on a Cartesian grid.

Arrays are indexed ``[iy, ix]`` with cell centers at ``origin + (ix + 0.5, iy + 0.5) * dx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NoPath


@dataclass
class EikonalField:
    phi: np.ndarray
    grad: np.ndarray  # (ny, nx, 2)
    nopath: np.ndarray
    dx: float
    origin: tuple = (0.0, 0.0)
    accepted: np.ndarray | None = None  # values in acceptance order, if traced
    speed: np.ndarray | None = None

    @property
    def shape(self):
        return self.phi.shape

    def gradient_at(self, pos) -> np.ndarray:
        pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
        return _sample_grad(pos, self.grad, self.origin[0], self.origin[1], self.dx)


# --- indexed binary min-heap keyed by flat cell index -------------------------


@njit(cache=True)
def _sift_up(hv, hk, where, j):
    v = hv[j]
    k = hk[j]
    while j > 0:
        p = (j - 1) >> 1
        if hv[p] <= v:
            break
        hv[j] = hv[p]
        hk[j] = hk[p]
        where[hk[j]] = j
        j = p
    hv[j] = v
    hk[j] = k
    where[k] = j


@njit(cache=True)
def _sift_down(hv, hk, where, j, size):
    v = hv[j]
    k = hk[j]
    while True:
        l = 2 * j + 1
        if l >= size:
            break
        m = l
        if l + 1 < size and hv[l + 1] < hv[l]:
            m = l + 1
        if v <= hv[m]:
            break
        hv[j] = hv[m]
        hk[j] = hk[m]
        where[hk[j]] = j
        j = m
    hv[j] = v
    hk[j] = k
    where[k] = j


@njit(cache=True)
def _solve_cell(phi, known, speed, k, nx, ny, dx):
    iy = k // nx
    ix = k - iy * nx
    a = math.inf
    if ix > 0 and known[k - 1]:
        a = phi[k - 1]
    if ix < nx - 1 and known[k + 1] and phi[k + 1] < a:
        a = phi[k + 1]
    b = math.inf
    if iy > 0 and known[k - nx]:
        b = phi[k - nx]
    if iy < ny - 1 and known[k + nx] and phi[k + nx] < b:
        b = phi[k + nx]
    f = dx / speed[k]
    if a > b:
        a, b = b, a
    if b == math.inf or b - a >= f:
        return a + f
    d = a - b
    return 0.5 * (a + b + math.sqrt(2.0 * f * f - d * d))


@njit(cache=True)
def _march(speed2, exit2, passable2, dx):
    ny, nx = speed2.shape
    ncell = ny * nx
    speed = speed2.ravel()
    exits = exit2.ravel()
    passable = passable2.ravel()
    phi = np.full(ncell, math.inf)
    known = np.zeros(ncell, np.bool_)
    where = np.full(ncell, -1, np.int64)  # heap slot, -1 if not in the heap
    hv = np.empty(ncell)
    hk = np.empty(ncell, np.int64)
    size = 0
    trace = np.empty(ncell)
    nacc = 0
    for k in range(ncell):
        if exits[k] and passable[k]:
            phi[k] = 0.0
            hv[size] = 0.0
            hk[size] = k
            where[k] = size
            size += 1
    while size > 0:
        k = hk[0]
        v = hv[0]
        where[k] = -1
        size -= 1
        if size > 0:
            hv[0] = hv[size]
            hk[0] = hk[size]
            where[hk[0]] = 0
            _sift_down(hv, hk, where, 0, size)
        known[k] = True
        trace[nacc] = v
        nacc += 1
        iy = k // nx
        ix = k - iy * nx
        for s in range(4):
            if s == 0:
                if ix == nx - 1:
                    continue
                q = k + 1
            elif s == 1:
                if ix == 0:
                    continue
                q = k - 1
            elif s == 2:
                if iy == ny - 1:
                    continue
                q = k + nx
            else:
                if iy == 0:
                    continue
                q = k - nx
            if known[q] or not passable[q]:
                continue
            cand = _solve_cell(phi, known, speed, q, nx, ny, dx)
            if cand < phi[q]:
                phi[q] = cand
                j = where[q]
                if j < 0:
                    j = size
                    size += 1
                    hv[j] = cand
                    hk[j] = q
                    where[q] = j
                hv[j] = cand
                _sift_up(hv, hk, where, j)
    return phi.reshape(ny, nx), trace[:nacc]


@njit(cache=True)
def _gradient(phi, passable, dx):
    ny, nx = phi.shape
    g = np.zeros((ny, nx, 2))
    for iy in range(ny):
        for ix in range(nx):
            p0 = phi[iy, ix]
            if not math.isfinite(p0):
                continue
            for ax in range(2):
                lo = math.inf
                hi = math.inf
                if ax == 0:
                    if ix > 0 and passable[iy, ix - 1]:
                        lo = phi[iy, ix - 1]
                    if ix < nx - 1 and passable[iy, ix + 1]:
                        hi = phi[iy, ix + 1]
                else:
                    if iy > 0 and passable[iy - 1, ix]:
                        lo = phi[iy - 1, ix]
                    if iy < ny - 1 and passable[iy + 1, ix]:
                        hi = phi[iy + 1, ix]
                flo = math.isfinite(lo)
                fhi = math.isfinite(hi)
                if flo and fhi:
                    d = (hi - lo) / (2.0 * dx)
                elif fhi:
                    d = (hi - p0) / dx
                elif flo:
                    d = (p0 - lo) / dx
                else:
                    d = 0.0
                g[iy, ix, ax] = d
    return g


@njit(cache=True)
def _sample_grad(pos, grad, x0, y0, dx):
    """Bilinear interpolation of a (ny, nx, k) cell-centered field; clamped at the edges."""
    ny, nx, nc = grad.shape
    out = np.zeros((pos.shape[0], nc))
    for i in range(pos.shape[0]):
        fx = (pos[i, 0] - x0) / dx - 0.5
        fy = (pos[i, 1] - y0) / dx - 0.5
        fx = min(max(fx, 0.0), nx - 1.0)
        fy = min(max(fy, 0.0), ny - 1.0)
        ix = min(int(fx), nx - 2) if nx > 1 else 0
        iy = min(int(fy), ny - 2) if ny > 1 else 0
        tx = fx - ix if nx > 1 else 0.0
        ty = fy - iy if ny > 1 else 0.0
        ix1 = min(ix + 1, nx - 1)
        iy1 = min(iy + 1, ny - 1)
        for ax in range(nc):
            out[i, ax] = ((1 - tx) * (1 - ty) * grad[iy, ix, ax] + tx * (1 - ty) * grad[iy, ix1, ax]
                          + (1 - tx) * ty * grad[iy1, ix, ax] + tx * ty * grad[iy1, ix1, ax])
    return out


def fast_march(speed, exit_mask, passable=None, dx: float = 0.25, origin=(0.0, 0.0),
               strict: bool = False, trace: bool = False) -> EikonalField:
    """Travel-time field from the exit cells through the passable cells.

    Cells that no front reaches keep ``phi = inf`` and are flagged in
    ``nopath``; with ``strict=True`` that raises ``NoPath`` instead.
    """
    speed = np.ascontiguousarray(speed, dtype=float)
    exit_mask = np.ascontiguousarray(exit_mask, dtype=np.bool_)
    passable = (np.ones(speed.shape, np.bool_) if passable is None
                else np.ascontiguousarray(passable, dtype=np.bool_))
    if speed.ndim != 2 or exit_mask.shape != speed.shape or passable.shape != speed.shape:
        raise ValueError("speed, exit_mask and passable must be 2-D arrays of one shape")
    if np.any(speed[passable] <= 0) or not np.all(np.isfinite(speed[passable])):
        raise ValueError("speed must be finite and > 0 on passable cells")
    if not np.any(exit_mask & passable):
        raise NoPath("no passable exit cell")
    phi, acc = _march(speed, exit_mask, passable, float(dx))
    nopath = passable & ~np.isfinite(phi)
    if strict and nopath.any():
        raise NoPath(f"{int(nopath.sum())} passable cells cannot reach an exit")
    grad = _gradient(phi, passable, float(dx))
    return EikonalField(phi, grad, nopath, float(dx), (float(origin[0]), float(origin[1])),
                        acc if trace else None, speed)
