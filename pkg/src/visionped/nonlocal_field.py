"""Nonlocal reaction intensities by density-weighted quadrature over neighbors.

For particle ``i`` and each turning side, the intensity is the average of the
reaction kernel over the neighbors in that side's danger set, weighted by
``rho_j * area_j``. All goal groups contribute. Co-moving and coincident
pairs are skipped. An empty danger set gives 0 for that side.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

from .interaction import VisionParams, _danger, _indicators, _phi
from .meshfree import NeighborList


class PhiPair(NamedTuple):
    phi_plus: float
    phi_minus: float


@njit(cache=True)
def _phi_pm_one(i, pos, dirs, rho, areas, nb, c, a, b, tau0, e, phi0, R):
    num_p = den_p = num_m = den_m = 0.0
    xx = pos[i, 0]
    xy = pos[i, 1]
    ux = dirs[i, 0]
    uy = dirs[i, 1]
    for j in nb:
        rx = pos[j, 0] - xx
        ry = pos[j, 1] - xy
        dux = dirs[j, 0] - ux
        duy = dirs[j, 1] - uy
        if rx == 0.0 and ry == 0.0:
            continue
        if dux == 0.0 and duy == 0.0:
            continue
        dba, tti, md = _indicators(xx, xy, ux, uy, pos[j, 0], pos[j, 1], dirs[j, 0], dirs[j, 1], c)
        k = _danger(dba, tti, md, R, a, b, tau0, e)
        if k == 0:
            continue
        m = rho[j] * areas[j]
        ker = _phi(abs(dba), abs(tti), a, b, tau0, e, phi0)
        if k > 0:
            num_p += ker * m
            den_p += m
        else:
            num_m += ker * m
            den_m += m
    pp = num_p / den_p if den_p > 0.0 else 0.0
    pm = num_m / den_m if den_m > 0.0 else 0.0
    return pp, pm


@njit(cache=True)
def _phi_pm_all(pos, dirs, rho, areas, active, offsets, idx, c, a, b, tau0, e, phi0, R):
    n = pos.shape[0]
    out = np.zeros((n, 2))
    for i in range(n):
        if not active[i]:
            continue
        pp, pm = _phi_pm_one(i, pos, dirs, rho, areas, idx[offsets[i]:offsets[i + 1]],
                             c, a, b, tau0, e, phi0, R)
        out[i, 0] = pp
        out[i, 1] = pm
    return out


def _kernel_args(p: VisionParams):
    return (p.speed_c, p.sigma_a, p.sigma_b, p.tau0, p.sigma_exp, p.phi0, p.radius_R)


def phi_pm_nonlocal(i: int, pos, dirs, rho, nbrs: NeighborList, p: VisionParams) -> PhiPair:
    """Nonlocal intensities for one particle.

    ``nbrs.quadrature_weights`` are the neighbors' areas, aligned with
    ``nbrs.indices``.
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    n = len(pos)
    areas = np.zeros(n)
    areas[nbrs.indices] = nbrs.quadrature_weights
    pp, pm = _phi_pm_one(i, pos, np.ascontiguousarray(dirs, dtype=float), np.asarray(rho, float),
                         areas, np.asarray(nbrs.indices, np.int64), *_kernel_args(p))
    return PhiPair(pp, pm)


def phi_pm_all(pos, dirs, rho, areas, active, offsets, idx, p: VisionParams) -> np.ndarray:
    """(N, 2) array of (phi_plus, phi_minus); inactive rows are zero."""
    pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        return np.zeros((0, 2))
    return _phi_pm_all(pos, np.ascontiguousarray(dirs, dtype=float), np.asarray(rho, float),
                       np.asarray(areas, float), np.asarray(active, np.bool_),
                       offsets, idx, *_kernel_args(p))
