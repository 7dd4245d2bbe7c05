"""Meshfree spatial operators: cell-list neighbor search, the compactly
supported Gaussian weight, first-order weighted least squares (WLS)
derivatives and per-particle quadrature areas.

Neighbor lists are stored in CSR form ``(offsets, idx)``: the neighbors of
particle ``i`` are ``idx[offsets[i]:offsets[i+1]]``, sorted ascending, so every
reduction over neighbors runs in a fixed order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, DegenerateStencil

COND_MAX = 1e12

# diag flag bits
FLAG_DEGENERATE = 1


@dataclass(frozen=True)
class WeightParams:
    h: float
    alpha_shape: float = 4.0

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError(f"support radius h must be > 0, got {self.h}")
        if not 2.0 <= self.alpha_shape <= 6.0:
            raise ConfigError(f"alpha_shape must lie in [2, 6], got {self.alpha_shape}")


@njit(cache=True)
def _w(r2, h, alpha):
    if r2 > h * h:
        return 0.0
    return math.exp(-alpha * r2 / (h * h))


def weight(r, wp: WeightParams) -> float:
    r = np.asarray(r, dtype=float)
    return float(_w(float(r @ r), wp.h, wp.alpha_shape))


# --- neighbor search ---------------------------------------------------------


@njit(cache=True)
def _build_cells(pos, active, h):
    n = pos.shape[0]
    xmin = np.inf
    ymin = np.inf
    xmax = -np.inf
    ymax = -np.inf
    for i in range(n):
        if active[i]:
            xmin = min(xmin, pos[i, 0])
            ymin = min(ymin, pos[i, 1])
            xmax = max(xmax, pos[i, 0])
            ymax = max(ymax, pos[i, 1])
    if xmin > xmax:
        xmin = ymin = 0.0
        xmax = ymax = 0.0
    ncx = int((xmax - xmin) / h) + 1
    ncy = int((ymax - ymin) / h) + 1
    cell_of = np.full(n, -1, np.int64)
    start = np.zeros(ncx * ncy + 1, np.int64)
    for i in range(n):
        if active[i]:
            cx = min(int((pos[i, 0] - xmin) / h), ncx - 1)
            cy = min(int((pos[i, 1] - ymin) / h), ncy - 1)
            c = cy * ncx + cx
            cell_of[i] = c
            start[c + 1] += 1
    for c in range(ncx * ncy):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    items = np.empty(start[-1], np.int64)
    for i in range(n):
        c = cell_of[i]
        if c >= 0:
            items[fill[c]] = i
            fill[c] += 1
    return xmin, ymin, ncx, ncy, start, items


@njit(cache=True)
def _query(px, py, skip, pos, h, xmin, ymin, ncx, ncy, start, items, out):
    """Write neighbors of point (px, py) into ``out``; return the count."""
    h2 = h * h
    cx = int(math.floor((px - xmin) / h))
    cy = int(math.floor((py - ymin) / h))
    k = 0
    for gy in range(max(cy - 1, 0), min(cy + 2, ncy)):
        for gx in range(max(cx - 1, 0), min(cx + 2, ncx)):
            c = gy * ncx + gx
            for s in range(start[c], start[c + 1]):
                j = items[s]
                if j == skip:
                    continue
                dx = pos[j, 0] - px
                dy = pos[j, 1] - py
                if dx * dx + dy * dy <= h2:
                    out[k] = j
                    k += 1
    out[:k] = np.sort(out[:k])
    return k


@njit(cache=True)
def _neighbor_csr(pos, active, h):
    n = pos.shape[0]
    xmin, ymin, ncx, ncy, start, items = _build_cells(pos, active, h)
    buf = np.empty(max(n, 1), np.int64)
    counts = np.zeros(n + 1, np.int64)
    for i in range(n):
        if active[i]:
            counts[i + 1] = _query(pos[i, 0], pos[i, 1], i, pos, h, xmin, ymin, ncx, ncy, start, items, buf)
    offsets = np.cumsum(counts)
    idx = np.empty(offsets[-1], np.int64)
    for i in range(n):
        if active[i]:
            k = _query(pos[i, 0], pos[i, 1], i, pos, h, xmin, ymin, ncx, ncy, start, items, buf)
            idx[offsets[i]:offsets[i] + k] = buf[:k]
    return offsets, idx


class NeighborGrid:
    """Uniform background cells of side ``h`` over the active particles."""

    def __init__(self, pos, h: float, active=None):
        self.pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
        n = self.pos.shape[0]
        self.active = np.ones(n, bool) if active is None else np.asarray(active, bool)
        self.h = float(h)
        (self.xmin, self.ymin, self.ncx, self.ncy,
         self.start, self.items) = _build_cells(self.pos, self.active, self.h)

    def query_point(self, x: float, y: float, skip: int = -1) -> np.ndarray:
        buf = np.empty(max(len(self.pos), 1), np.int64)
        k = _query(float(x), float(y), skip, self.pos, self.h, self.xmin, self.ymin,
                   self.ncx, self.ncy, self.start, self.items, buf)
        return buf[:k].copy()

    def query(self, i: int) -> np.ndarray:
        return self.query_point(self.pos[i, 0], self.pos[i, 1], skip=i)


def neighbor_lists(pos, h: float, active=None):
    """All-particle CSR neighbor lists within radius ``h`` (inclusive)."""
    pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
    active = np.ones(len(pos), bool) if active is None else np.asarray(active, bool)
    return _neighbor_csr(pos, active, float(h))


def brute_force_neighbors(pos, h: float, i: int) -> np.ndarray:
    d2 = np.sum((pos - pos[i]) ** 2, axis=1)
    hits = np.flatnonzero(d2 <= h * h)
    return hits[hits != i]


@dataclass
class NeighborList:
    indices: np.ndarray
    quadrature_weights: np.ndarray


def neighbors(i: int, pos, grid: NeighborGrid, h: float, areas=None) -> NeighborList:
    """Neighbors of particle ``i`` with their quadrature areas attached.

    ``areas`` are per-particle areas (see :func:`local_areas`); when omitted
    they are computed over all particles in the grid as a single group.
    """
    if h != grid.h:
        raise ValueError("grid was built for a different radius")
    idx = grid.query(i)
    if areas is None:
        offsets, all_idx = neighbor_lists(grid.pos, h, grid.active)
        areas = local_areas(offsets, all_idx, np.zeros(len(grid.pos), np.int64), h, np.inf)
    return NeighborList(idx, np.asarray(areas)[idx])


# --- quadrature areas --------------------------------------------------------


def local_area(n_neighbors: int, h: float, spacing: float = math.inf) -> float:
    """Share of the support disc owned by one particle: pi h^2 / (N + 1).

    An isolated particle would own the whole disc; it is capped at
    ``spacing**2`` instead.
    """
    disc = math.pi * h * h
    if n_neighbors == 0:
        return min(disc, spacing * spacing)
    return disc / (n_neighbors + 1)


@njit(cache=True)
def _local_areas(offsets, idx, group, h, spacing):
    n = offsets.shape[0] - 1
    out = np.empty(n)
    disc = math.pi * h * h
    for i in range(n):
        k = 0
        for s in range(offsets[i], offsets[i + 1]):
            if group[idx[s]] == group[i]:
                k += 1
        if k == 0:
            out[i] = min(disc, spacing * spacing)
        else:
            out[i] = disc / (k + 1)
    return out


def local_areas(offsets, idx, group, h: float, spacing: float) -> np.ndarray:
    """Areas for every particle, counting only same-group neighbors."""
    return _local_areas(offsets, idx, np.asarray(group, np.int64), float(h), float(spacing))


# --- weighted least squares --------------------------------------------------


@njit(cache=True)
def _normal_matrix(i, pos, nb, h, alpha):
    a00 = a01 = a11 = 0.0
    m = 0
    for j in nb:
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        w = _w(dx * dx + dy * dy, h, alpha)
        if w > 0.0:
            m += 1
        a00 += w * dx * dx
        a01 += w * dx * dy
        a11 += w * dy * dy
    return a00, a01, a11, m


@njit(cache=True)
def _stencil_ok(a00, a01, a11, m, cond_max):
    if m < 3:
        return False
    tr = a00 + a11
    disc = math.sqrt(max((a00 - a11) ** 2 / 4.0 + a01 * a01, 0.0))
    lmax = tr / 2.0 + disc
    lmin = tr / 2.0 - disc
    return lmin > 0.0 and lmax / lmin <= cond_max


@njit(cache=True)
def _wls_grad(i, f, pos, nb, h, alpha, cond_max):
    a00, a01, a11, m = _normal_matrix(i, pos, nb, h, alpha)
    if not _stencil_ok(a00, a01, a11, m, cond_max):
        return 0.0, 0.0, False
    b0 = b1 = 0.0
    for j in nb:
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        w = _w(dx * dx + dy * dy, h, alpha)
        df = f[j] - f[i]
        b0 += w * dx * df
        b1 += w * dy * df
    det = a00 * a11 - a01 * a01
    return (a11 * b0 - a01 * b1) / det, (a00 * b1 - a01 * b0) / det, True


@njit(cache=True)
def _wls_div(i, vx, vy, pos, nb, h, alpha, cond_max):
    a00, a01, a11, m = _normal_matrix(i, pos, nb, h, alpha)
    if not _stencil_ok(a00, a01, a11, m, cond_max):
        return 0.0, False
    bx0 = bx1 = by0 = by1 = 0.0
    for j in nb:
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        w = _w(dx * dx + dy * dy, h, alpha)
        dfx = vx[j] - vx[i]
        dfy = vy[j] - vy[i]
        bx0 += w * dx * dfx
        bx1 += w * dy * dfx
        by0 += w * dx * dfy
        by1 += w * dy * dfy
    det = a00 * a11 - a01 * a01
    dvx_dx = (a11 * bx0 - a01 * bx1) / det
    dvy_dy = (a00 * by1 - a01 * by0) / det
    return dvx_dx + dvy_dy, True


@njit(cache=True)
def _divergence_all(pos, vec, group, active, offsets, idx, h, alpha, cond_max):
    """Same-group WLS divergence for every active particle.

    Returns (div, degenerate) where degenerate marks zero-fallback particles.
    """
    n = pos.shape[0]
    div = np.zeros(n)
    bad = np.zeros(n, np.bool_)
    vx = np.ascontiguousarray(vec[:, 0])
    vy = np.ascontiguousarray(vec[:, 1])
    buf = np.empty(max(n, 1), np.int64)
    for i in range(n):
        if not active[i]:
            continue
        k = 0
        for s in range(offsets[i], offsets[i + 1]):
            j = idx[s]
            if group[j] == group[i]:
                buf[k] = j
                k += 1
        d, ok = _wls_div(i, vx, vy, pos, buf[:k], h, alpha, cond_max)
        div[i] = d
        bad[i] = not ok
    return div, bad


def _as_nb(nbrs) -> np.ndarray:
    if isinstance(nbrs, NeighborList):
        nbrs = nbrs.indices
    return np.asarray(nbrs, np.int64)


def wls_gradient(i: int, f, pos, nbrs, wp: WeightParams, cond_max: float = COND_MAX) -> np.ndarray:
    """Least-squares gradient of the particle field ``f`` at particle ``i``.

    Raises DegenerateStencil when fewer than three neighbors carry weight or
    the 2x2 normal matrix is too ill-conditioned.
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    gx, gy, ok = _wls_grad(i, np.asarray(f, float), pos, _as_nb(nbrs), wp.h, wp.alpha_shape, cond_max)
    if not ok:
        raise DegenerateStencil(f"particle {i}: degenerate WLS stencil")
    return np.array([gx, gy])


def wls_divergence(i: int, vec, pos, nbrs, wp: WeightParams, cond_max: float = COND_MAX) -> float:
    vec = np.asarray(vec, float)
    pos = np.ascontiguousarray(pos, dtype=float)
    d, ok = _wls_div(i, np.ascontiguousarray(vec[:, 0]), np.ascontiguousarray(vec[:, 1]), pos,
                     _as_nb(nbrs), wp.h, wp.alpha_shape, cond_max)
    if not ok:
        raise DegenerateStencil(f"particle {i}: degenerate WLS stencil")
    return float(d)


def divergence_all(pos, vec, group, active, offsets, idx, wp: WeightParams, cond_max: float = COND_MAX):
    return _divergence_all(np.ascontiguousarray(pos, dtype=float), np.ascontiguousarray(vec, dtype=float),
                           np.asarray(group, np.int64), np.asarray(active, np.bool_),
                           offsets, idx, wp.h, wp.alpha_shape, cond_max)


# --- Shepard interpolation ---------------------------------------------------


@njit(cache=True)
def _shepard_grid(pos, values, mask, x0, y0, dx, nx, ny, h, alpha):
    """Gaussian Shepard interpolation of ``values`` onto cell centers.

    Cells with zero total weight get 0.
    """
    num = np.zeros((ny, nx))
    den = np.zeros((ny, nx))
    reach = int(math.ceil(h / dx)) + 1
    h2 = h * h
    wx = np.empty(2 * reach + 1)
    for i in range(pos.shape[0]):
        if not mask[i]:
            continue
        ci = int(math.floor((pos[i, 0] - x0) / dx))
        cj = int(math.floor((pos[i, 1] - y0) / dx))
        jx0 = max(ci - reach, 0)
        jx1 = min(ci + reach + 1, nx)
        # the Gaussian factorizes; only the support test needs r^2
        for jx in range(jx0, jx1):
            ddx = x0 + (jx + 0.5) * dx - pos[i, 0]
            wx[jx - jx0] = math.exp(-alpha * ddx * ddx / h2)
        for jy in range(max(cj - reach, 0), min(cj + reach + 1, ny)):
            ddy = y0 + (jy + 0.5) * dx - pos[i, 1]
            ry = ddy * ddy
            if ry > h2:
                continue
            wy = math.exp(-alpha * ry / h2)
            for jx in range(jx0, jx1):
                ddx = x0 + (jx + 0.5) * dx - pos[i, 0]
                if ddx * ddx + ry <= h2:
                    w = wx[jx - jx0] * wy
                    num[jy, jx] += w * values[i]
                    den[jy, jx] += w
    out = np.zeros((ny, nx))
    for jy in range(ny):
        for jx in range(nx):
            if den[jy, jx] > 0.0:
                out[jy, jx] = num[jy, jx] / den[jy, jx]
    return out


def shepard_grid(pos, values, mask, origin, dx: float, shape, wp: WeightParams) -> np.ndarray:
    ny, nx = shape
    return _shepard_grid(np.ascontiguousarray(pos, dtype=float), np.asarray(values, float),
                         np.asarray(mask, np.bool_), float(origin[0]), float(origin[1]),
                         float(dx), int(nx), int(ny), wp.h, wp.alpha_shape)
