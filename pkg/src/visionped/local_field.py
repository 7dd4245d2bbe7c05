"""Spatially local approximation of the reaction intensities.

The kernel table ``Psi(s)`` is the average of the scaled reaction kernel over
the scaled danger set for relative speed ``s``, computed by midpoint
quadrature in a frame aligned with the relative velocity. In that frame
``zeta = (-p, q)`` with ``p`` the look-ahead distance and ``q`` the lateral
offset, so that

    tau_hat = p / (c |dU|),   D_hat = |q|,   dba_hat = -c q |dU| / (p^2 + q^2).

The danger set is a subset of the half strip ``p > 0, |q| < R_hat``. With
``a = 0`` it is unbounded along ``p``, so the integral is truncated at
``|zeta| <= cutoff / lam``: the same physical radius the nonlocal sum uses.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import LambdaZero
from .interaction import VisionParams
from .meshfree import _w
from .nonlocal_field import PhiPair

TABLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ScaledParams:
    r_hat: float
    phi0_hat: float
    a_hat: float
    tau0_hat: float
    b_hat: float
    speed_c: float
    sigma_exp: float
    lam: float


def scale_params(p: VisionParams) -> ScaledParams:
    lam = p.lam
    if lam <= 0:
        raise LambdaZero("lambda = 0 selects the nonlocal model; no scaled parameters")
    return ScaledParams(
        r_hat=p.radius_R / lam,
        phi0_hat=p.phi0 / lam,
        a_hat=lam * p.sigma_a,
        tau0_hat=p.tau0 / lam,
        b_hat=p.sigma_b / lam ** (p.sigma_exp - 1.0),
        speed_c=p.speed_c,
        sigma_exp=p.sigma_exp,
        lam=lam,
    )


def vision_params_from_scaled(sp: ScaledParams, lam: float) -> VisionParams:
    """Physical parameters for O(1) scaled parameters at scale ``lam``."""
    if lam <= 0:
        raise LambdaZero("lambda must be > 0")
    return VisionParams(
        speed_c=sp.speed_c,
        sigma_a=sp.a_hat / lam,
        sigma_b=lam ** (sp.sigma_exp - 1.0) * sp.b_hat,
        sigma_exp=sp.sigma_exp,
        tau0=lam * sp.tau0_hat,
        phi0=lam * sp.phi0_hat,
        radius_R=lam * sp.r_hat,
        lam=lam,
    )


@dataclass
class PsiTable:
    speeds: np.ndarray  # relative speeds c|dU| on a uniform grid from 0
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    area_plus: np.ndarray
    area_minus: np.ndarray
    meta: dict = field(default_factory=dict)

    def __call__(self, s):
        return (np.interp(s, self.speeds, self.psi_plus),
                np.interp(s, self.speeds, self.psi_minus))

    @property
    def max_asymmetry(self) -> float:
        scale = max(float(np.max(np.abs(self.psi_plus))), 1e-300)
        return float(np.max(np.abs(self.psi_plus - self.psi_minus))) / scale


@njit(cache=True)
def _psi_at(u_rel, q_mid, dq, p_mid, dp, zmax, c, a, b, tau0, e, phi0):
    """(num+, area+, num-, area-) for unit-direction difference ``u_rel``."""
    num_p = area_p = num_m = area_m = 0.0
    z2 = zmax * zmax
    for kq in range(q_mid.shape[0]):
        q = q_mid[kq]
        aq = abs(q)
        for kp in range(p_mid.shape[0]):
            p = p_mid[kp]
            r2 = p * p + q * q
            if r2 > z2:
                break
            tau = p / (c * u_rel)
            sig = a + b / (tau + tau0) ** e
            dba_abs = c * aq * u_rel / r2
            if dba_abs >= sig:
                continue
            da = dq * dp[kp]
            val = phi0 * (sig - dba_abs) * da
            if q < 0.0:  # dba > 0
                num_p += val
                area_p += da
            elif q > 0.0:
                num_m += val
                area_m += da
    return num_p, area_p, num_m, area_m


def _zeta_grid(r_hat: float, zmax: float, n_q: int, n_p: int):
    q_edges = np.linspace(-r_hat, r_hat, n_q + 1)
    q_mid = 0.5 * (q_edges[1:] + q_edges[:-1])
    p_edges = np.concatenate([[0.0], np.geomspace(zmax * 1e-7, zmax, n_p)])
    p_mid = 0.5 * (p_edges[1:] + p_edges[:-1])
    return q_mid, float(q_edges[1] - q_edges[0]), p_mid, np.diff(p_edges)


def build_psi_table(sp: ScaledParams, cutoff: float, n_speeds: int = 256,
                    n_q: int = 200, n_p: int = 800) -> PsiTable:
    """Tabulate Psi+/- on ``n_speeds`` uniform relative speeds in [0, 2c].

    ``cutoff`` is the physical truncation radius (the neighbor radius h).
    Psi(0) = 0 by convention: co-moving agents do not interact.
    """
    if n_q % 2:
        n_q += 1  # keep q = 0 off the midpoints
    zmax = cutoff / sp.lam
    q_mid, dq, p_mid, dp = _zeta_grid(sp.r_hat, zmax, n_q, n_p)
    c = sp.speed_c
    speeds = np.linspace(0.0, 2.0 * c, n_speeds)
    out = np.zeros((4, n_speeds))
    for k, s in enumerate(speeds[1:], start=1):
        out[:, k] = _psi_at(s / c, q_mid, dq, p_mid, dp, zmax, c, sp.a_hat, sp.b_hat,
                            sp.tau0_hat, sp.sigma_exp, sp.phi0_hat)
    num_p, area_p, num_m, area_m = out
    with np.errstate(invalid="ignore", divide="ignore"):
        psi_p = np.where(area_p > 0, num_p / np.where(area_p > 0, area_p, 1.0), 0.0)
        psi_m = np.where(area_m > 0, num_m / np.where(area_m > 0, area_m, 1.0), 0.0)
    meta = {
        "format_version": TABLE_FORMAT_VERSION,
        "scaled_params": asdict(sp),
        "cutoff": cutoff,
        "zeta_max": zmax,
        "n_speeds": n_speeds,
        "n_q": n_q,
        "n_p": n_p,
        "p_grading": "geometric from 1e-7 * zeta_max",
    }
    table = PsiTable(speeds, psi_p, psi_m, area_p, area_m, meta)
    if table.max_asymmetry > 1e-9:
        raise ArithmeticError(f"Psi+ != Psi- (relative asymmetry {table.max_asymmetry:.3e})")
    return table


# --- cache -------------------------------------------------------------------


def table_key(sp: ScaledParams, cutoff: float, n_speeds: int = 256, n_q: int = 200, n_p: int = 800) -> str:
    blob = json.dumps({"v": TABLE_FORMAT_VERSION, "sp": {k: repr(v) for k, v in asdict(sp).items()},
                       "cutoff": repr(cutoff), "res": [n_speeds, n_q, n_p]}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_psi_table(table: PsiTable, path) -> None:
    np.savez(path, speeds=table.speeds, psi_plus=table.psi_plus, psi_minus=table.psi_minus,
             area_plus=table.area_plus, area_minus=table.area_minus,
             meta=np.array(json.dumps(table.meta, sort_keys=True)))


def load_psi_table(path) -> PsiTable:
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format_version") != TABLE_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported table format {meta.get('format_version')}")
        return PsiTable(z["speeds"], z["psi_plus"], z["psi_minus"], z["area_plus"], z["area_minus"], meta)


def cached_psi_table(sp: ScaledParams, cutoff: float, cache_dir=None, **res) -> PsiTable:
    if cache_dir is None:
        return build_psi_table(sp, cutoff, **res)
    path = Path(cache_dir) / f"psi_{table_key(sp, cutoff, **res)}.npz"
    if path.exists():
        return load_psi_table(path)
    table = build_psi_table(sp, cutoff, **res)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_psi_table(table, path)
    return table


# --- local intensities -------------------------------------------------------


@njit(cache=True)
def _interp_uniform(s, ds, values):
    x = s / ds
    k = int(x)
    if k >= values.shape[0] - 1:
        return values[-1]
    f = x - k
    return values[k] * (1.0 - f) + values[k + 1] * f


@njit(cache=True)
def _phi_pm_local_one(i, pos, dirs, rho, group, nb, n_groups, h, alpha, c, ds, psi_p, psi_m):
    wsum = np.zeros(n_groups)
    rsum = np.zeros(n_groups)
    uxs = np.zeros(n_groups)
    uys = np.zeros(n_groups)
    g = group[i]
    wsum[g] = 1.0
    rsum[g] = rho[i]
    uxs[g] = rho[i] * dirs[i, 0]
    uys[g] = rho[i] * dirs[i, 1]
    for j in nb:
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        w = _w(dx * dx + dy * dy, h, alpha)
        if w == 0.0:
            continue
        k = group[j]
        wsum[k] += w
        rsum[k] += w * rho[j]
        uxs[k] += w * rho[j] * dirs[j, 0]
        uys[k] += w * rho[j] * dirs[j, 1]
    num_p = num_m = den = 0.0
    for k in range(n_groups):
        if wsum[k] == 0.0:
            continue
        rk = rsum[k] / wsum[k]
        norm = math.sqrt(uxs[k] ** 2 + uys[k] ** 2)
        den += rk
        if norm == 0.0:
            continue
        dux = uxs[k] / norm - dirs[i, 0]
        duy = uys[k] / norm - dirs[i, 1]
        s = c * math.sqrt(dux * dux + duy * duy)
        num_p += _interp_uniform(s, ds, psi_p) * rk
        num_m += _interp_uniform(s, ds, psi_m) * rk
    if den == 0.0:
        return 0.0, 0.0
    return num_p / den, num_m / den


@njit(cache=True)
def _phi_pm_local_all(pos, dirs, rho, group, active, offsets, idx, n_groups, h, alpha, c, ds, psi_p, psi_m):
    n = pos.shape[0]
    out = np.zeros((n, 2))
    for i in range(n):
        if not active[i]:
            continue
        pp, pm = _phi_pm_local_one(i, pos, dirs, rho, group, idx[offsets[i]:offsets[i + 1]],
                                   n_groups, h, alpha, c, ds, psi_p, psi_m)
        out[i, 0] = pp
        out[i, 1] = pm
    return out


def _table_args(table: PsiTable, c: float):
    ds = float(table.speeds[1] - table.speeds[0])
    return c, ds, np.asarray(table.psi_plus, float), np.asarray(table.psi_minus, float)


def phi_pm_local(i: int, pos, dirs, rho, group, nbrs, table: PsiTable, h: float,
                 alpha: float, speed_c: float, n_groups: int | None = None) -> PhiPair:
    """Local intensities for particle ``i``.

    Group densities and mean directions at the particle come from Gaussian
    Shepard averages over ``nbrs`` (plus the particle itself for its own
    group); groups with no member in reach carry no weight.
    """
    group = np.asarray(group, np.int64)
    if n_groups is None:
        n_groups = int(group.max()) + 1
    idx = nbrs.indices if hasattr(nbrs, "indices") else nbrs
    pp, pm = _phi_pm_local_one(i, np.ascontiguousarray(pos, dtype=float), np.ascontiguousarray(dirs, dtype=float),
                               np.asarray(rho, float), group, np.asarray(idx, np.int64), n_groups, h, alpha,
                               *_table_args(table, speed_c))
    return PhiPair(pp, pm)


def phi_pm_local_all(pos, dirs, rho, group, active, offsets, idx, table: PsiTable, h: float,
                     alpha: float, speed_c: float, n_groups: int) -> np.ndarray:
    pos = np.ascontiguousarray(pos, dtype=float).reshape(-1, 2)
    if len(pos) == 0:
        return np.zeros((0, 2))
    return _phi_pm_local_all(pos, np.ascontiguousarray(dirs, dtype=float), np.asarray(rho, float),
                             np.asarray(group, np.int64), np.asarray(active, np.bool_), offsets, idx,
                             int(n_groups), h, alpha, *_table_args(table, speed_c))
