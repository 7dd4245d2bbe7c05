import math

import numpy as np
import pytest

from visionped.dynamics import Domain, ExitSegment
from visionped.eikonal import fast_march
from visionped.errors import ConfigError
from visionped.meshfree import WeightParams
from visionped.socialforce import (FLAG_NOPATH, EikonalGrid, SfState, SocialForceModel,
                                   SocialForceParams, density_on_grid, density_speed, sf_step,
                                   solve_fields)

WP = WeightParams(h=3 * 1.68)
P = SocialForceParams()


def test_density_speed_examples():
    assert density_speed(0.0, P) == pytest.approx(1.5)
    assert density_speed(6.0, P) == pytest.approx(1.5e-3)
    assert density_speed(3.0, P) == pytest.approx(0.75)
    assert density_speed(100.0, P) == pytest.approx(1.5e-3)


def test_params_validation():
    with pytest.raises(ConfigError):
        SocialForceParams(desired_speed="fast")
    with pytest.raises(ConfigError):
        SocialForceParams(T=0.0)
    with pytest.raises(ConfigError):
        SocialForceParams(k_n=-1.0)


def test_grid_exit_cells():
    g = EikonalGrid.for_domain(Domain(), 0.25)
    assert (g.nx, g.ny) == (200, 80)
    right, left = g.exit_masks
    assert right[:, -1].sum() == 40 and right.sum() == 40
    assert left[:, 0].sum() == 40 and left.sum() == 40
    with pytest.raises(ConfigError):
        EikonalGrid.for_domain(Domain(), 0.3)


def _field_toward(x_exit: float):
    # uniform field pointing at a vertical exit line
    exit_mask = np.zeros((80, 200), bool)
    exit_mask[:, 0 if x_exit == 0 else -1] = True
    return fast_march(np.full((80, 200), 1.5), exit_mask, dx=0.25)


def test_single_particle_relaxes_to_desired_velocity():
    dom = Domain(goals=((0.0, 10.0),), exits=(ExitSegment("left", 0.0, 20.0),))
    f = _field_toward(0)
    s = SfState.at_rest([[25.0, 10.0]], [0.1], [0])
    dt = 1e-4
    hist = []
    for _ in range(60):
        s = sf_step(s, P, [f], dom, WP, dt)
        hist.append(s.vel[0].copy())
    vdes = np.array([-1.5, 0.0])
    # linear relaxation: |v - vdes| = |vdes| / (1 + dt/T)^k
    k5 = int(round(5 * P.T / dt))
    assert np.linalg.norm(hist[k5 - 1] - vdes) == pytest.approx(1.5 / (1 + dt / P.T) ** k5, rel=1e-9)
    assert np.linalg.norm(hist[k5 - 1] - vdes) < 0.01 * 1.5
    assert np.linalg.norm(hist[-1] - vdes) < np.linalg.norm(hist[k5 - 1] - vdes)


def test_zero_density_follows_steepest_descent():
    # corner exit: straight-line paths towards it
    dom = Domain(goals=((0.0, 0.0),), exits=(ExitSegment("left", 0.0, 0.25),))
    grid = EikonalGrid.for_domain(dom, 0.25)
    p = SocialForceParams(k_n=0.0, rho_max=1e9)
    s = SfState.at_rest([[30.0, 15.0]], [1e-9], [0])
    fields = solve_fields(s, p, grid, WP, 1)
    start = s.pos[0].copy()
    for _ in range(4000):
        s = sf_step(s, p, fields, dom, WP, 2e-3)
    # the particle moved along the line to the exit corner
    d = s.pos[0] - start
    aim = -start / np.linalg.norm(start)
    assert np.linalg.norm(d) > 5.0
    cross = abs(d[0] * aim[1] - d[1] * aim[0]) / np.linalg.norm(d)
    assert cross < 0.05


def test_density_on_grid_and_fields():
    dom = Domain()
    grid = EikonalGrid.for_domain(dom, 0.25)
    s = SfState.at_rest([[10.125, 10.125], [40.0, 5.0]], [1.0, 2.0], [0, 1])
    dens = density_on_grid(s.pos, s.rho, s.group, s.active, grid, WP, 2)
    assert dens[40, 40] == pytest.approx(1.0)
    assert dens.max() <= 2.0 + 1e-12
    fields = solve_fields(s, P, grid, WP, 2)
    assert len(fields) == 2
    assert fields[0].phi[:, -1][grid.exit_masks[0][:, -1]].max() == 0.0


def test_nopath_particle_is_held():
    exit_mask = np.zeros((80, 200), bool)
    exit_mask[:, -1] = True
    passable = np.ones((80, 200), bool)
    passable[30:50, 20] = passable[30:50, 40] = False
    passable[30, 20:41] = passable[49, 20:41] = False
    f = fast_march(np.ones((80, 200)), exit_mask, passable, dx=0.25)
    s = SfState.at_rest([[7.5, 10.0], [30.0, 3.0]], [1.0, 1.0], [0, 0])
    out = sf_step(s, P, [f], Domain(goals=((50.0, 10.0),), exits=(ExitSegment("right", 5, 15),)), WP, 1e-3)
    assert out.flags[0] & FLAG_NOPATH and np.all(out.vel[0] == 0)
    assert not out.flags[1] & FLAG_NOPATH and out.vel[1, 0] > 0


def test_model_step_moves_groups_towards_exits():
    m = SocialForceModel(P, WP, Domain())
    s = SfState.at_rest([[10.0, 10.0], [40.0, 10.0]], [0.35, 0.35], [0, 1])
    for _ in range(200):
        s = m.step(s, 1e-3)
    assert s.vel[0, 0] > 1.0 and s.vel[1, 0] < -1.0
    assert np.all(np.linalg.norm(s.vel, axis=1) <= 1.5 * 1.05 + 1e-12)
    assert s.t == pytest.approx(0.2)
    assert math.isclose(np.linalg.norm(s.dir[0]), 1.0)
