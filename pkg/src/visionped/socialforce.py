"""Social-force baseline steered by an Eikonal travel-time field.

Every step the particle density is spread onto a grid, turned into a speed
field F(rho), and one fast-marching solve per goal group gives that group's
travel-time field. Particles relax towards a desired velocity
and push each other with the same contact law as the vision model.

The desired velocity points down the travel-time gradient. Its magnitude is
F(rho) sampled at the particle by default, the speed the Eikonal solve
itself assumes there; ``desired_speed="u_max"`` uses the free-flow speed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dynamics import RHO_MIN, Domain, _contact_all, boundaries_inplace
from .eikonal import EikonalField, _sample_grad, fast_march
from .errors import ConfigError, UnstableStep
from .meshfree import FLAG_DEGENERATE, WeightParams, divergence_all, neighbor_lists, shepard_grid

SPEED_FLOOR = 1e-3
SPEED_OVERSHOOT = 0.05
FLAG_NOPATH = 2


@dataclass(frozen=True)
class SocialForceParams:
    k_n: float = 100.0
    gamma_n: float = 1.0
    gamma_t: float = 0.2
    T: float = 0.001
    u_max: float = 1.5
    rho_max: float = 6.0
    grid_dx: float = 0.25
    contact_radius: float = 1.68
    desired_speed: str = "density"  # or "u_max"

    def __post_init__(self):
        if self.desired_speed not in ("density", "u_max"):
            raise ConfigError(f"desired_speed must be 'density' or 'u_max', got {self.desired_speed!r}")
        if not (self.T > 0 and self.u_max > 0 and self.rho_max > 0 and self.grid_dx > 0):
            raise ConfigError("T, u_max, rho_max and grid_dx must be > 0")
        for name in ("k_n", "gamma_n", "gamma_t", "contact_radius"):
            if getattr(self, name) < 0:
                raise ConfigError(f"SocialForceParams.{name} must be >= 0")


@dataclass
class SfState:
    pos: np.ndarray
    vel: np.ndarray
    rho: np.ndarray
    group: np.ndarray
    active: np.ndarray
    t: float = 0.0
    flags: np.ndarray = None
    evac_time: np.ndarray = None

    def __post_init__(self):
        n = len(self.pos)
        self.pos = np.array(self.pos, float).reshape(n, 2)
        self.vel = np.array(self.vel, float).reshape(n, 2)
        self.rho = np.array(self.rho, float).reshape(n)
        self.group = np.array(self.group, np.int64).reshape(n)
        self.active = np.array(self.active, bool).reshape(n)
        if self.flags is None:
            self.flags = np.zeros(n, np.int8)
        if self.evac_time is None:
            self.evac_time = np.full(n, np.nan)

    def __len__(self):
        return len(self.pos)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def dir(self) -> np.ndarray:
        """Unit headings (zero where the particle stands still)."""
        s = np.linalg.norm(self.vel, axis=1, keepdims=True)
        return np.divide(self.vel, s, out=np.zeros_like(self.vel), where=s > 0)

    @classmethod
    def at_rest(cls, pos, rho, group, active=None) -> "SfState":
        n = len(pos)
        return cls(pos, np.zeros((n, 2)), rho, group, np.ones(n, bool) if active is None else active)


def density_speed(rho, p: SocialForceParams):
    """F(rho) = u_max * max(floor, 1 - rho / rho_max)."""
    return p.u_max * np.maximum(SPEED_FLOOR, 1.0 - np.asarray(rho, float) / p.rho_max)


@dataclass(frozen=True)
class EikonalGrid:
    """Cell-centered grid over the domain plus each group's exit cells."""

    nx: int
    ny: int
    dx: float
    exit_masks: tuple

    @classmethod
    def for_domain(cls, domain: Domain, dx: float) -> "EikonalGrid":
        nx = max(1, int(round(domain.width / dx)))
        ny = max(1, int(round(domain.height / dx)))
        if not (math.isclose(nx * dx, domain.width) and math.isclose(ny * dx, domain.height)):
            raise ConfigError(f"grid_dx {dx} does not divide the {domain.width} x {domain.height} domain")
        xc = (np.arange(nx) + 0.5) * dx
        yc = (np.arange(ny) + 0.5) * dx
        masks = []
        for ex in domain.exits[:domain.n_groups]:
            m = np.zeros((ny, nx), bool)
            if ex.side in ("left", "right"):
                rows = (yc >= ex.lo) & (yc <= ex.hi)
                m[rows, 0 if ex.side == "left" else nx - 1] = True
            else:
                cols = (xc >= ex.lo) & (xc <= ex.hi)
                m[0 if ex.side == "bottom" else ny - 1, cols] = True
            masks.append(m)
        return cls(nx, ny, dx, tuple(masks))


def density_on_grid(pos, rho, group, active, grid: EikonalGrid, wp: WeightParams, n_groups: int):
    """Sum over groups of the per-group Shepard interpolant of rho."""
    out = np.zeros((grid.ny, grid.nx))
    for g in range(n_groups):
        m = active & (group == g)
        if m.any():
            out += shepard_grid(pos, rho, m, (0.0, 0.0), grid.dx, (grid.ny, grid.nx), wp)
    return out


def solve_fields(state: SfState, p: SocialForceParams, grid: EikonalGrid, wp: WeightParams,
                 n_groups: int) -> list[EikonalField]:
    dens = density_on_grid(state.pos, state.rho, state.group, state.active, grid, wp, n_groups)
    speed = density_speed(dens, p)
    return [fast_march(speed, grid.exit_masks[g], None, grid.dx) for g in range(n_groups)]


@njit(cache=True)
def _desired(pos, group, active, grads, speed, use_speed, x0, y0, dx, u_max):
    n = pos.shape[0]
    vd = np.zeros((n, 2))
    stuck = np.zeros(n, np.bool_)
    for i in range(n):
        if not active[i]:
            continue
        g = _sample_grad(pos[i:i + 1], grads[group[i]], x0, y0, dx)
        nrm = math.sqrt(g[0, 0] ** 2 + g[0, 1] ** 2)
        if nrm == 0.0 or not math.isfinite(nrm):
            stuck[i] = True
            continue
        mag = _sample_grad(pos[i:i + 1], speed, x0, y0, dx)[0, 0] if use_speed else u_max
        vd[i, 0] = -mag * g[0, 0] / nrm
        vd[i, 1] = -mag * g[0, 1] / nrm
    return vd, stuck


def sf_step(state: SfState, p: SocialForceParams, fields: list[EikonalField], domain: Domain,
            wp: WeightParams, dt: float, nbrs=None) -> SfState:
    """One step of the baseline; ``fields[g]`` is group g's travel-time field.

    The relaxation term is integrated linearly implicitly, so steps larger
    than T stay stable; contact forces are explicit.
    """
    act = state.active
    if nbrs is None:
        nbrs = neighbor_lists(state.pos, wp.h, act)
    offsets, idx = nbrs
    grads = np.stack([f.grad for f in fields])
    f0 = fields[0]
    use_speed = p.desired_speed == "density" and f0.speed is not None
    speed = (f0.speed if use_speed else np.zeros(f0.phi.shape))[:, :, None]
    vd, stuck = _desired(state.pos, state.group, act, grads, np.ascontiguousarray(speed), use_speed,
                         f0.origin[0], f0.origin[1], f0.dx, p.u_max)
    nopath = np.zeros(len(state), bool)
    for g, f in enumerate(fields):
        m = act & (state.group == g)
        if f.nopath.any() and m.any():
            ix = np.clip((state.pos[m, 0] / f.dx).astype(int), 0, f.phi.shape[1] - 1)
            iy = np.clip((state.pos[m, 1] / f.dx).astype(int), 0, f.phi.shape[0] - 1)
            nopath[np.flatnonzero(m)] = f.nopath[iy, ix]
    hold = act & (stuck | nopath)

    if p.contact_radius > wp.h:
        raise ConfigError("contact radius must not exceed the neighbor radius h")
    force = _contact_all(state.pos, state.vel, act, offsets, idx, p.k_n, p.gamma_n, p.gamma_t, p.contact_radius)
    vel = (state.vel + dt * (vd / p.T + force)) / (1.0 + dt / p.T)
    cap = p.u_max * (1.0 + SPEED_OVERSHOOT)
    s = np.linalg.norm(vel, axis=1)
    over = s > cap
    vel[over] *= (cap / s[over])[:, None]
    vel[hold] = 0.0
    vel[~act] = state.vel[~act]

    div, bad = divergence_all(state.pos, state.vel, state.group, act, offsets, idx, wp)
    rho = np.where(act, np.maximum(state.rho * (1.0 - dt * div), RHO_MIN), state.rho)
    pos = state.pos + np.where(act[:, None], dt * vel, 0.0)
    if act.any():
        moved = np.max(np.linalg.norm(pos[act] - state.pos[act], axis=1))
        if moved > wp.h:
            raise UnstableStep(f"particle moved {moved:g} > h = {wp.h:g} in one step")
    flags = np.where(bad, FLAG_DEGENERATE, 0) | np.where(hold, FLAG_NOPATH, 0)
    new = SfState(pos, vel, rho, state.group, act.copy(), state.t + dt, flags.astype(np.int8),
                  state.evac_time.copy())
    boundaries_inplace(new.pos, new.vel, new.active, new.evac_time, new.group, domain, new.t,
                       renormalize=False)
    return new


@dataclass
class SocialForceModel:
    params: SocialForceParams
    weights: WeightParams
    domain: Domain

    def __post_init__(self):
        self.grid = EikonalGrid.for_domain(self.domain, self.params.grid_dx)

    def step(self, state: SfState, dt: float) -> SfState:
        """Re-solve the travel-time fields from the current density, then step."""
        nbrs = neighbor_lists(state.pos, self.weights.h, state.active)
        fields = solve_fields(state, self.params, self.grid, self.weights, self.domain.n_groups)
        return sf_step(state, self.params, fields, self.domain, self.weights, dt, nbrs)
