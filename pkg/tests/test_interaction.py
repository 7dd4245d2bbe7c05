import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from visionped.errors import AtGoal, CoincidentPositions, ConfigError, ZeroRelativeVelocity
from visionped.interaction import (Branch, DangerClass, DangerIndicators, VisionParams,
                                   angular_velocity, danger_class, goal_bearing_rate, indicators,
                                   phi_kernel, sigma)

P = VisionParams()
coord = st.floats(-20, 20, allow_nan=False)
angle = st.floats(0, 2 * math.pi, allow_nan=False)


def unit(a):
    return np.array([math.cos(a), math.sin(a)])


def rot(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# hand-evaluated reference values


@pytest.mark.parametrize("x,u,y,v,expected", [
    ((0, 0), (1, 0), (4, 0), (-1, 0), (0.0, 4 / 3, 0.0)),
    ((0, 0), (1, 0), (2, 2), (0, -1), (0.0, 4 / 3, 0.0)),
    ((0, 0), (1, 0), (2, 1), (-1, 0), (0.6, 2 / 3, 1.0)),
])
def test_indicator_examples(x, u, y, v, expected):
    got = indicators(x, u, y, v, P)
    assert got == pytest.approx(expected, abs=1e-12)


def test_indicator_errors():
    with pytest.raises(CoincidentPositions):
        indicators((1, 1), (1, 0), (1, 1), (0, 1), P)
    with pytest.raises(ZeroRelativeVelocity):
        indicators((0, 0), (1, 0), (3, 1), (1, 0), P)


def test_goal_bearing_rate_examples():
    assert goal_bearing_rate((0, 0), (1, 0), (10, 0), P) == 0.0
    assert goal_bearing_rate((0, 0), (0, 1), (10, 0), P) == pytest.approx(-0.15, abs=1e-15)
    assert goal_bearing_rate((0, 0), (0, -1), (10, 0), P) == pytest.approx(0.15, abs=1e-15)
    with pytest.raises(AtGoal):
        goal_bearing_rate((2, 3), (1, 0), (2, 3), P)


def test_sigma_and_kernel_examples():
    assert sigma(0.0, P) == pytest.approx(0.6)
    assert sigma(3.0, P) == pytest.approx(0.075)
    assert sigma(1e9, P) == pytest.approx(P.sigma_a, abs=1e-12)
    # kernel at sigma = 0.6 (tau = 0)
    assert phi_kernel(0.2, 0.0, P) == pytest.approx(0.4)
    assert phi_kernel(0.7, 0.0, P) == 0.0
    assert phi_kernel(0.0, 1.0, P) == pytest.approx(P.phi0 * sigma(1.0, P))


def test_danger_class_examples():
    s1 = 0.6 / 2 ** 1.5
    assert sigma(1.0, P) == pytest.approx(s1)
    assert danger_class(DangerIndicators(0.3, 1.0, 0.5), P) is DangerClass.NONE
    assert danger_class(DangerIndicators(0.1, 1.0, 0.5), P) is DangerClass.PLUS
    assert danger_class(DangerIndicators(-0.1, 1.0, 0.5), P) is DangerClass.MINUS
    assert danger_class(DangerIndicators(0.0, 1.0, 0.0), P) is DangerClass.NONE
    assert danger_class(DangerIndicators(0.1, -1.0, 0.5), P) is DangerClass.NONE
    assert danger_class(DangerIndicators(0.1, 1.0, 1.68), P) is DangerClass.NONE


def test_angular_velocity_examples():
    assert angular_velocity(0.5, 0.3, 0.1) == (pytest.approx(0.3), Branch.AVOID_MINUS)
    assert angular_velocity(0.5, 0.3, 0.8) == (0.8, Branch.GOAL_DOMINATES)
    assert angular_velocity(0.0, 0.0, 0.2) == (0.2, Branch.GOAL_DOMINATES)
    assert angular_velocity(0.3, 0.5, 0.1) == (pytest.approx(-0.3), Branch.AVOID_PLUS)
    # exact tie: H(0) = 0 on both terms
    assert angular_velocity(0.4, 0.4, 0.1) == (0.0, Branch.TIE)
    assert angular_velocity(0.0, 0.0, 0.0) == (0.0, Branch.TIE)
    with pytest.raises(ValueError):
        angular_velocity(-0.1, 0.2, 0.0)


def test_params_validation():
    with pytest.raises(ConfigError):
        VisionParams(tau0=0)
    with pytest.raises(ConfigError):
        VisionParams(lam=-1)
    with pytest.raises(ConfigError):
        VisionParams(sigma_a=-0.1)
    VisionParams(sigma_a=0.0)


# properties


def pair():
    return st.tuples(coord, coord, angle, coord, coord, angle)


@given(pair())
def test_exchange_symmetry(t):
    x = np.array(t[:2]); u = unit(t[2]); y = np.array(t[3:5]); v = unit(t[5])
    assume(np.linalg.norm(y - x) > 1e-3 and np.linalg.norm(v - u) > 1e-3)
    a = indicators(x, u, y, v, P)
    b = indicators(y, v, x, u, P)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


@given(pair(), angle, coord, coord)
def test_rotation_translation_invariance(t, theta, sx, sy):
    x = np.array(t[:2]); u = unit(t[2]); y = np.array(t[3:5]); v = unit(t[5])
    assume(np.linalg.norm(y - x) > 1e-2 and np.linalg.norm(v - u) > 1e-2)
    R = rot(theta)
    shift = np.array([sx, sy])
    a = indicators(x, u, y, v, P)
    b = indicators(R @ x + shift, R @ u, R @ y + shift, R @ v, P)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)
    g = np.array([7.0, -3.0])
    assume(np.linalg.norm(g - x) > 1e-2)
    ga = goal_bearing_rate(x, u, g, P)
    gb = goal_bearing_rate(R @ x + shift, R @ u, R @ g + shift, P)
    assert gb == pytest.approx(ga, rel=1e-9, abs=1e-12)


@given(pair())
def test_miss_distance_bounds(t):
    x = np.array(t[:2]); u = unit(t[2]); y = np.array(t[3:5]); v = unit(t[5])
    assume(np.linalg.norm(y - x) > 1e-3 and np.linalg.norm(v - u) > 1e-3)
    md = indicators(x, u, y, v, P).md
    assert 0.0 <= md <= np.linalg.norm(y - x) * (1 + 1e-12) + 1e-12


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=20))
def test_sigma_monotone(taus):
    taus = sorted(taus)
    vals = [sigma(t, P) for t in taus]
    for (t0, a), (t1, b) in zip(zip(taus, vals), zip(taus[1:], vals[1:])):
        assert b <= a
        if t1 > t0 and a > 1e-12:
            assert b < a or math.isclose(a, b, rel_tol=1e-15)


@given(st.floats(0, 2, allow_nan=False), st.floats(0, 50, allow_nan=False))
def test_kernel_nonnegative_and_clamped(dba, tau):
    k = phi_kernel(dba, tau, P)
    assert k >= 0
    if dba >= sigma(tau, P):
        assert k == 0.0


@given(st.floats(-1, 1), st.floats(0, 50), st.floats(0, 3))
def test_plus_class_implies_positive_kernel(dba, tau, md):
    ind = DangerIndicators(dba, tau, md)
    if danger_class(ind, P) is not DangerClass.NONE:
        assert phi_kernel(abs(dba), abs(tau), P) > 0


@given(st.floats(0, 2), st.floats(0, 2), st.floats(-3, 3))
def test_omega_bounded(pp, pm, ag):
    om, br = angular_velocity(pp, pm, ag)
    assert abs(om) <= max(pp, pm, abs(ag))
    assert (br is Branch.GOAL_DOMINATES) == (ag < -pm or ag > pp)
    if br is Branch.GOAL_DOMINATES:
        assert om == ag
