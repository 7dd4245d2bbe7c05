"""Lagrangian time stepping of the vision-based model.

Each particle carries position, unit direction, density and a goal group:

    dx/dt = c U,   drho/dt = -c rho div U,   dU/dt = omega U_perp.

A step first evaluates all rates from the current snapshot, then commits the
new snapshot; nothing computed in the first phase sees partial updates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numba import njit

from .errors import ConfigError, UnstableStep
from .interaction import VisionParams, _goal_rate, _omega
from .local_field import PsiTable, phi_pm_local_all
from .meshfree import FLAG_DEGENERATE, WeightParams, divergence_all, local_areas, neighbor_lists
from .nonlocal_field import phi_pm_all

RHO_MIN = 1e-6

SIDES = {"left": 0, "right": 1, "bottom": 2, "top": 3}


class Mode(str, Enum):
    NO_DIRECTION_CONTROL = "no_direction_control"
    VISION_NONLOCAL = "vision_nonlocal"
    VISION_LOCAL = "vision_local"


@dataclass(frozen=True)
class ExitSegment:
    side: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigError(f"exit side must be one of {sorted(SIDES)}, got {self.side!r}")
        if not self.lo < self.hi:
            raise ConfigError("exit segment needs lo < hi")


@dataclass(frozen=True)
class Domain:
    """Rectangle [0, width] x [0, height]; group ``g`` leaves only via ``exits[g]``.

    ``walls=False`` gives an unbounded plane (no wall or exit handling).
    """

    width: float = 50.0
    height: float = 20.0
    goals: tuple = ((50.0, 10.0), (0.0, 10.0))
    exits: tuple = (ExitSegment("right", 5.0, 15.0), ExitSegment("left", 5.0, 15.0))
    walls: bool = True

    @property
    def n_groups(self) -> int:
        return len(self.goals)

    def exit_arrays(self):
        g = self.n_groups
        side = np.full(g, -1, np.int64)
        lo = np.zeros(g)
        hi = np.zeros(g)
        for k, ex in enumerate(self.exits[:g]):
            if ex is not None:
                side[k], lo[k], hi[k] = SIDES[ex.side], ex.lo, ex.hi
        return side, lo, hi

    def goal_array(self) -> np.ndarray:
        return np.asarray(self.goals, float).reshape(-1, 2)


@dataclass(frozen=True)
class RepulsionParams:
    k_n: float = 1.0
    gamma_n: float = 0.01
    gamma_t: float = 0.01
    contact_radius: float = 0.84

    def __post_init__(self):
        for name in ("k_n", "gamma_n", "gamma_t", "contact_radius"):
            if getattr(self, name) < 0:
                raise ConfigError(f"RepulsionParams.{name} must be >= 0")


@dataclass(frozen=True)
class StepConfig:
    dt: float
    mode: Mode = Mode.VISION_NONLOCAL
    repulsion: RepulsionParams | None = None
    integrator: str = "euler"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if self.integrator not in ("euler", "heun"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        object.__setattr__(self, "mode", Mode(self.mode))

    def validate_cfl(self, speed_c: float, spacing: float) -> None:
        if not speed_c * self.dt < 0.5 * spacing:
            raise ConfigError(f"CFL violated: c*dt = {speed_c * self.dt:g} >= 0.5*dx = {0.5 * spacing:g}")


@dataclass
class State:
    pos: np.ndarray
    dir: np.ndarray
    rho: np.ndarray
    group: np.ndarray
    active: np.ndarray
    t: float = 0.0
    flags: np.ndarray = None
    evac_time: np.ndarray = None

    def __post_init__(self):
        n = len(self.pos)
        self.pos = np.array(self.pos, float).reshape(n, 2)
        self.dir = np.array(self.dir, float).reshape(n, 2)
        self.rho = np.array(self.rho, float).reshape(n)
        self.group = np.array(self.group, np.int64).reshape(n)
        self.active = np.array(self.active, bool).reshape(n)
        if self.flags is None:
            self.flags = np.zeros(n, np.int8)
        if self.evac_time is None:
            self.evac_time = np.full(n, np.nan)

    def __len__(self):
        return len(self.pos)

    def copy(self) -> "State":
        return State(self.pos.copy(), self.dir.copy(), self.rho.copy(), self.group.copy(),
                     self.active.copy(), self.t, self.flags.copy(), self.evac_time.copy())

    @property
    def n_active(self) -> int:
        return int(self.active.sum())


@dataclass
class VisionModel:
    """Everything a step needs besides the state."""

    params: VisionParams
    weights: WeightParams
    domain: Domain
    spacing: float
    table: PsiTable | None = None

    @property
    def n_groups(self) -> int:
        return self.domain.n_groups


@dataclass
class Rates:
    omega: np.ndarray
    branch: np.ndarray
    phi: np.ndarray
    div: np.ndarray
    force: np.ndarray
    degenerate: np.ndarray
    offsets: np.ndarray = field(repr=False, default=None)
    idx: np.ndarray = field(repr=False, default=None)


# --- kernels -----------------------------------------------------------------


@njit(cache=True)
def _omega_all(pos, dirs, group, goals, phi, active, c, dt):
    n = pos.shape[0]
    omega = np.zeros(n)
    branch = np.full(n, -1, np.int64)
    for i in range(n):
        if not active[i]:
            continue
        g = group[i]
        ag = _goal_rate(pos[i, 0], pos[i, 1], dirs[i, 0], dirs[i, 1], goals[g, 0], goals[g, 1], c)
        omega[i], branch[i] = _omega(phi[i, 0], phi[i, 1], ag)
        if branch[i] == 0 and dt > 0.0:
            # alpha_g ~ 1/r at the goal; within a step of it, do not turn past the line of sight
            rx = goals[g, 0] - pos[i, 0]
            ry = goals[g, 1] - pos[i, 1]
            dev = abs(math.atan2(dirs[i, 0] * ry - dirs[i, 1] * rx, dirs[i, 0] * rx + dirs[i, 1] * ry))
            lim = dev / dt
            if omega[i] > lim:
                omega[i] = lim
            elif omega[i] < -lim:
                omega[i] = -lim
    return omega, branch


@njit(cache=True)
def _contact_one(i, pos, vel, nb, k_n, gamma_n, gamma_t, d0):
    fx = fy = 0.0
    for j in nb:
        rx = pos[i, 0] - pos[j, 0]
        ry = pos[i, 1] - pos[j, 1]
        d = math.sqrt(rx * rx + ry * ry)
        if d >= d0:
            continue
        if d == 0.0:
            nx = 1.0 if i < j else -1.0
            ny = 0.0
        else:
            nx = rx / d
            ny = ry / d
        tx = -ny
        ty = nx
        g = d0 - d
        dvx = vel[i, 0] - vel[j, 0]
        dvy = vel[i, 1] - vel[j, 1]
        fn = k_n * g - gamma_n * (dvx * nx + dvy * ny)
        ft = -gamma_t * (dvx * tx + dvy * ty)
        fx += fn * nx + ft * tx
        fy += fn * ny + ft * ty
    return fx, fy


@njit(cache=True)
def _contact_all(pos, vel, active, offsets, idx, k_n, gamma_n, gamma_t, d0):
    n = pos.shape[0]
    f = np.zeros((n, 2))
    for i in range(n):
        if not active[i]:
            continue
        nb = idx[offsets[i]:offsets[i + 1]]
        f[i, 0], f[i, 1] = _contact_one(i, pos, vel, nb, k_n, gamma_n, gamma_t, d0)
    return f


@njit(cache=True)
def _rotate(dirs, theta, active):
    out = dirs.copy()
    for i in range(dirs.shape[0]):
        if not active[i]:
            continue
        cs = math.cos(theta[i])
        sn = math.sin(theta[i])
        x = cs * dirs[i, 0] - sn * dirs[i, 1]
        y = sn * dirs[i, 0] + cs * dirs[i, 1]
        nrm = math.sqrt(x * x + y * y)
        out[i, 0] = x / nrm
        out[i, 1] = y / nrm
    return out


@njit(cache=True)
def _apply_boundaries(pos, vec, active, evac_time, group, width, height,
                      exit_side, exit_lo, exit_hi, t_new, renormalize):
    for i in range(pos.shape[0]):
        if not active[i]:
            continue
        x = pos[i, 0]
        y = pos[i, 1]
        g = group[i]
        side = exit_side[g] if g < exit_side.shape[0] else -1
        out = False
        if side == 0:
            out = x <= 0.0 and exit_lo[g] <= y <= exit_hi[g]
        elif side == 1:
            out = x >= width and exit_lo[g] <= y <= exit_hi[g]
        elif side == 2:
            out = y <= 0.0 and exit_lo[g] <= x <= exit_hi[g]
        elif side == 3:
            out = y >= height and exit_lo[g] <= x <= exit_hi[g]
        if out:
            active[i] = False
            evac_time[i] = t_new
            continue
        ox = vec[i, 0]
        oy = vec[i, 1]
        hit = False
        if x < 0.0:
            pos[i, 0] = 0.0
            hit = True
            if vec[i, 0] < 0.0:
                vec[i, 0] = 0.0
        elif x > width:
            pos[i, 0] = width
            hit = True
            if vec[i, 0] > 0.0:
                vec[i, 0] = 0.0
        if y < 0.0:
            pos[i, 1] = 0.0
            hit = True
            if vec[i, 1] < 0.0:
                vec[i, 1] = 0.0
        elif y > height:
            pos[i, 1] = height
            hit = True
            if vec[i, 1] > 0.0:
                vec[i, 1] = 0.0
        if hit and renormalize:
            nrm = math.sqrt(vec[i, 0] ** 2 + vec[i, 1] ** 2)
            if nrm > 0.0:
                vec[i, 0] /= nrm
                vec[i, 1] /= nrm
            else:
                # head-on into the wall: keep pushing, steering will turn it
                vec[i, 0] = ox
                vec[i, 1] = oy


# --- public operations -------------------------------------------------------


def contact_repulsion(i: int, nbrs, pos, vel, rp: RepulsionParams) -> np.ndarray:
    """Contact acceleration on particle ``i`` from the neighbors in ``nbrs``.

    ``vel`` are full velocities (``c * dir`` in the vision model). Within the
    contact radius ``d0`` each partner adds a spring ``k_n * overlap`` along the
    separation plus normal and tangential damping of the relative velocity.
    Coincident partners are pushed apart along the x axis, ordered by index.
    """
    idx = nbrs.indices if hasattr(nbrs, "indices") else nbrs
    fx, fy = _contact_one(i, np.ascontiguousarray(pos, dtype=float), np.ascontiguousarray(vel, dtype=float),
                          np.asarray(idx, np.int64), rp.k_n, rp.gamma_n, rp.gamma_t, rp.contact_radius)
    return np.array([fx, fy])


def contact_all(pos, vel, active, offsets, idx, rp: RepulsionParams) -> np.ndarray:
    return _contact_all(np.ascontiguousarray(pos, dtype=float), np.ascontiguousarray(vel, dtype=float),
                        np.asarray(active, np.bool_), offsets, idx,
                        rp.k_n, rp.gamma_n, rp.gamma_t, rp.contact_radius)


def boundaries_inplace(pos, vec, active, evac_time, group, domain: Domain, t_new: float,
                       renormalize: bool = True) -> None:
    if not domain.walls:
        return
    side, lo, hi = domain.exit_arrays()
    _apply_boundaries(pos, vec, active, evac_time, group, domain.width, domain.height,
                      side, lo, hi, float(t_new), renormalize)


def apply_boundaries(pos, direction, group: int, domain: Domain, t: float = 0.0):
    """Single-particle wall and exit handling.

    Returns ``(pos, direction, active, evac_time)``; ``evac_time`` is NaN
    unless the particle left through its own exit.
    """
    p = np.array(pos, float).reshape(1, 2)
    d = np.array(direction, float).reshape(1, 2)
    act = np.ones(1, bool)
    ev = np.full(1, np.nan)
    boundaries_inplace(p, d, act, ev, np.array([group], np.int64), domain, t)
    return p[0], d[0], bool(act[0]), float(ev[0])


def evacuation_ratio(state: State, initial_count: int) -> float:
    if initial_count <= 0:
        raise ValueError("initial_count must be > 0")
    return state.n_active / initial_count


def compute_rates(state: State, cfg: StepConfig, model: VisionModel) -> Rates:
    p = model.params
    wp = model.weights
    pos, dirs, act = state.pos, state.dir, state.active
    n = len(state)
    offsets, idx = neighbor_lists(pos, wp.h, act)
    if cfg.mode is Mode.NO_DIRECTION_CONTROL:
        phi = np.zeros((n, 2))
    elif cfg.mode is Mode.VISION_NONLOCAL:
        areas = local_areas(offsets, idx, state.group, wp.h, model.spacing)
        phi = phi_pm_all(pos, dirs, state.rho, areas, act, offsets, idx, p)
    else:
        if model.table is None:
            raise ConfigError("vision_local mode needs a Psi table")
        phi = phi_pm_local_all(pos, dirs, state.rho, state.group, act, offsets, idx, model.table,
                               wp.h, wp.alpha_shape, p.speed_c, model.n_groups)
    omega, branch = _omega_all(pos, dirs, state.group, model.domain.goal_array(), phi, act, p.speed_c, cfg.dt)
    div, bad = divergence_all(pos, dirs, state.group, act, offsets, idx, wp)
    if cfg.repulsion is not None:
        if cfg.repulsion.contact_radius > wp.h:
            raise ConfigError("contact radius must not exceed the neighbor radius h")
        force = contact_all(pos, p.speed_c * dirs, act, offsets, idx, cfg.repulsion)
    else:
        force = np.zeros((n, 2))
    return Rates(omega, branch, phi, div, force, bad, offsets, idx)


def _advance(state: State, dirs_new, rates_div, force, cfg, model, dt):
    """Shared tail of a step: repulsion, position, density."""
    c = model.params.speed_c
    act = state.active
    if cfg.repulsion is not None:
        v = c * dirs_new + force * dt
        nrm = np.linalg.norm(v, axis=1)
        ok = act & (nrm > 0)
        dirs_new[ok] = v[ok] / nrm[ok, None]
    rho_new = np.where(act, np.maximum(state.rho * (1.0 - c * dt * rates_div), RHO_MIN), state.rho)
    return dirs_new, rho_new


def step(state: State, cfg: StepConfig, model: VisionModel) -> State:
    """Advance one time step; returns a new state (the input is untouched)."""
    dt = cfg.dt
    c = model.params.speed_c
    act = state.active
    r0 = compute_rates(state, cfg, model)
    if cfg.integrator == "euler":
        dirs_new = _rotate(state.dir, r0.omega * dt, act)
        dirs_new, rho_new = _advance(state, dirs_new, r0.div, r0.force, cfg, model, dt)
        pos_new = state.pos + np.where(act[:, None], c * dt * dirs_new, 0.0)
    else:
        d1 = _rotate(state.dir, r0.omega * dt, act)
        d1, rho1 = _advance(state, d1, r0.div, r0.force, cfg, model, dt)
        pred = replace(state.copy(), pos=state.pos + np.where(act[:, None], c * dt * d1, 0.0),
                       dir=d1, rho=rho1)
        r1 = compute_rates(pred, cfg, model)
        dirs_new = _rotate(state.dir, 0.5 * (r0.omega + r1.omega) * dt, act)
        dirs_new, rho_new = _advance(state, dirs_new, 0.5 * (r0.div + r1.div),
                                     0.5 * (r0.force + r1.force), cfg, model, dt)
        pos_new = state.pos + np.where(act[:, None], 0.5 * c * dt * (state.dir + dirs_new), 0.0)

    if act.any():
        moved = np.max(np.linalg.norm(pos_new[act] - state.pos[act], axis=1))
        if moved > model.weights.h:
            raise UnstableStep(f"particle moved {moved:g} > h = {model.weights.h:g} in one step")

    new = State(pos_new, dirs_new, rho_new, state.group, act.copy(), state.t + dt,
                np.where(r0.degenerate, FLAG_DEGENERATE, 0).astype(np.int8), state.evac_time.copy())
    boundaries_inplace(new.pos, new.dir, new.active, new.evac_time, new.group, model.domain, new.t)
    return new
