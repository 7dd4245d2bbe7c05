"""Pairwise collision-danger indicators and the turning decision rule.

Directions ``u``, ``v`` are unit vectors; the walking speed ``c`` multiplies
them wherever a velocity is needed. The 2D cross product is
``a x b = a.x * b.y - a.y * b.x``.

The ``_``-prefixed functions are numba kernels on plain floats and are reused
by the batch field evaluators.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import AtGoal, CoincidentPositions, ConfigError, ZeroRelativeVelocity


class Branch(IntEnum):
    GOAL_DOMINATES = 0
    AVOID_PLUS = 1
    AVOID_MINUS = 2
    TIE = 3


class DangerClass(IntEnum):
    MINUS = -1
    NONE = 0
    PLUS = 1


class DangerIndicators(NamedTuple):
    dba: float  # bearing-angle rate [1/s]
    tti: float  # time to interaction [s]
    md: float  # minimal distance [m]


class TurnDecision(NamedTuple):
    omega: float
    branch: Branch


@dataclass(frozen=True)
class VisionParams:
    """Constants of the vision-based model.

    ``sigma_exp`` is the exponent of the danger threshold, kept separate from
    ``speed_c`` although both default to 1.5. ``lam == 0`` selects the exact
    nonlocal model; ``lam > 0`` is the scale used by the local approximation.
    """

    speed_c: float = 1.5
    sigma_a: float = 0.0
    sigma_b: float = 0.6
    sigma_exp: float = 1.5
    tau0: float = 1.0
    phi0: float = 1.0
    radius_R: float = 1.68
    lam: float = 0.0

    def __post_init__(self):
        checks = {
            "speed_c": self.speed_c > 0,
            "sigma_a": self.sigma_a >= 0,
            "sigma_b": self.sigma_b > 0,
            "tau0": self.tau0 > 0,
            "phi0": self.phi0 > 0,
            "radius_R": self.radius_R > 0,
            "lam": self.lam >= 0,
        }
        for name, ok in checks.items():
            value = getattr(self, name)
            if not ok or not math.isfinite(value):
                raise ConfigError(f"invalid VisionParams.{name} = {value!r}")
        if not math.isfinite(self.sigma_exp):
            raise ConfigError(f"invalid VisionParams.sigma_exp = {self.sigma_exp!r}")

    def as_dict(self) -> dict:
        return asdict(self)


# --- numba kernels -----------------------------------------------------------


@njit(cache=True)
def _indicators(xx, xy, ux, uy, yx, yy, vx, vy, c):
    rx = yx - xx
    ry = yy - xy
    dux = vx - ux
    duy = vy - uy
    r2 = rx * rx + ry * ry
    du2 = dux * dux + duy * duy
    dot = rx * dux + ry * duy
    dba = c * (rx * duy - ry * dux) / r2
    tti = -dot / (c * du2)
    md2 = r2 - dot * dot / du2
    if md2 < 0.0:
        md2 = 0.0
    return dba, tti, math.sqrt(md2)


@njit(cache=True)
def _goal_rate(xx, xy, ux, uy, gx, gy, c):
    dx = gx - xx
    dy = gy - xy
    d2 = dx * dx + dy * dy
    if d2 == 0.0:
        return 0.0
    return -c * (dx * uy - dy * ux) / d2


@njit(cache=True)
def _sigma(tau_abs, a, b, tau0, e):
    return a + b / (tau_abs + tau0) ** e


@njit(cache=True)
def _phi(dba_abs, tau_abs, a, b, tau0, e, phi0):
    s = _sigma(tau_abs, a, b, tau0, e) - dba_abs
    return phi0 * s if s > 0.0 else 0.0


@njit(cache=True)
def _danger(dba, tti, md, R, a, b, tau0, e):
    if not (tti > 0.0 and md * md < R * R):
        return 0
    if abs(dba) >= _sigma(abs(tti), a, b, tau0, e):
        return 0
    if dba > 0.0:
        return 1
    if dba < 0.0:
        return -1
    return 0


@njit(cache=True)
def _omega(phi_plus, phi_minus, alpha_g):
    if alpha_g < -phi_minus or alpha_g > phi_plus:
        return alpha_g, 0
    ag = abs(alpha_g)
    arg = abs(phi_minus - ag) - abs(phi_plus - ag)
    if arg > 0.0:
        return -phi_plus, 1
    if arg < 0.0:
        return phi_minus, 2
    return 0.0, 3


# --- public scalar API -------------------------------------------------------


def _vec(a) -> np.ndarray:
    v = np.asarray(a, dtype=float).reshape(2)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {a!r}")
    return v


def indicators(x, u, y, v, p: VisionParams) -> DangerIndicators:
    """(DBA, TTI, MD) of partner ``(y, v)`` as seen from ``(x, u)``."""
    x, u, y, v = map(_vec, (x, u, y, v))
    if np.array_equal(x, y):
        raise CoincidentPositions("x == y: bearing rate undefined")
    if np.array_equal(u, v):
        raise ZeroRelativeVelocity("u == v: no relative motion")
    return DangerIndicators(*_indicators(x[0], x[1], u[0], u[1], y[0], y[1], v[0], v[1], p.speed_c))


def goal_bearing_rate(x, u, goal, p: VisionParams) -> float:
    x, u, goal = map(_vec, (x, u, goal))
    if np.array_equal(x, goal):
        raise AtGoal("particle sits on its goal")
    return float(_goal_rate(x[0], x[1], u[0], u[1], goal[0], goal[1], p.speed_c))


def sigma(tau_abs: float, p: VisionParams) -> float:
    if tau_abs < 0:
        raise ValueError("tau_abs must be >= 0")
    return float(_sigma(tau_abs, p.sigma_a, p.sigma_b, p.tau0, p.sigma_exp))


def phi_kernel(dba_abs: float, tau_abs: float, p: VisionParams) -> float:
    if dba_abs < 0 or tau_abs < 0:
        raise ValueError("phi_kernel takes absolute values")
    return float(_phi(dba_abs, tau_abs, p.sigma_a, p.sigma_b, p.tau0, p.sigma_exp, p.phi0))


def danger_class(ind: DangerIndicators, p: VisionParams) -> DangerClass:
    k = _danger(ind.dba, ind.tti, ind.md, p.radius_R, p.sigma_a, p.sigma_b, p.tau0, p.sigma_exp)
    return DangerClass(k)


def angular_velocity(phi_plus: float, phi_minus: float, alpha_g: float) -> TurnDecision:
    """Turning rate from the two reaction intensities and the goal bearing rate.

    The Heaviside convention is H(0) = 0, so an exact tie yields omega = 0.
    """
    if phi_plus < 0 or phi_minus < 0:
        raise ValueError("reaction intensities must be non-negative")
    omega, code = _omega(float(phi_plus), float(phi_minus), float(alpha_g))
    return TurnDecision(float(omega), Branch(code))
