import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visionped.eikonal import fast_march
from visionped.errors import NoPath


def point_source(dx, L=10.0):
    n = int(round(L / dx))
    exit_mask = np.zeros((n, n), bool)
    exit_mask[n // 2, n // 2] = True
    f = fast_march(np.ones((n, n)), exit_mask, dx=dx)
    c = (np.arange(n) + 0.5) * dx
    X, Y = np.meshgrid(c, c)
    src = c[n // 2]
    d = np.hypot(X - src, Y - src)
    return f, d


@pytest.mark.parametrize("dx", [0.5, 0.25, 0.125])
def test_point_source_distance(dx):
    f, d = point_source(dx)
    far = d >= 5 * dx
    assert np.max(np.abs(f.phi[far] - d[far])) <= 2 * dx
    # first-order upwinding overestimates off the grid axes
    assert np.all(f.phi >= d - 1e-9)


def test_refinement_reduces_error():
    errs = []
    for dx in (0.5, 0.25, 0.125):
        f, d = point_source(dx)
        far = d >= 2.0
        errs.append(np.max(np.abs(f.phi[far] - d[far])))
    assert errs[0] / errs[1] >= 1.5 and errs[1] / errs[2] >= 1.5


def test_plane_wave_exact_and_gradient():
    exit_mask = np.zeros((20, 40), bool)
    exit_mask[:, 0] = True
    f = fast_march(np.ones((20, 40)), exit_mask, dx=0.5)
    np.testing.assert_allclose(f.phi, np.tile(np.arange(40) * 0.5, (20, 1)), atol=1e-12)
    g = f.gradient_at([[5.1, 3.3], [12.0, 7.7]])
    np.testing.assert_allclose(g, [[1.0, 0.0], [1.0, 0.0]], atol=1e-12)
    f2 = fast_march(np.full((20, 40), 2.0), exit_mask, dx=0.5)
    np.testing.assert_allclose(f2.phi, f.phi / 2, atol=1e-12)


def test_walled_pocket_has_no_path():
    passable = np.ones((20, 20), bool)
    passable[5, 5:10] = passable[9, 5:10] = False
    passable[5:10, 5] = passable[5:10, 9] = False
    exit_mask = np.zeros((20, 20), bool)
    exit_mask[:, -1] = True
    f = fast_march(np.ones((20, 20)), exit_mask, passable, dx=1.0)
    assert f.nopath[6:9, 6:9].all() and f.nopath.sum() == 9
    assert np.all(np.isinf(f.phi[6:9, 6:9]))
    assert np.all(np.isfinite(f.phi[passable & ~f.nopath]))
    with pytest.raises(NoPath):
        fast_march(np.ones((20, 20)), exit_mask, passable, dx=1.0, strict=True)
    with pytest.raises(NoPath):
        fast_march(np.ones((4, 4)), np.zeros((4, 4), bool))


def test_bad_input():
    with pytest.raises(ValueError):
        fast_march(np.zeros((4, 4)), np.ones((4, 4), bool))
    with pytest.raises(ValueError):
        fast_march(np.ones((4, 4)), np.ones((4, 5), bool))


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_acceptance_order_monotone(seed):
    rng = np.random.default_rng(seed)
    ny, nx = rng.integers(5, 40, 2)
    speed = rng.uniform(0.05, 3.0, (ny, nx))
    passable = rng.uniform(size=(ny, nx)) > 0.15
    exit_mask = np.zeros((ny, nx), bool)
    exit_mask[rng.integers(0, ny), rng.integers(0, nx)] = True
    exit_mask[:, 0] |= rng.uniform(size=ny) > 0.7
    if not (exit_mask & passable).any():
        passable[exit_mask] = True
    f = fast_march(speed, exit_mask, passable, dx=0.3, trace=True)
    assert np.all(np.diff(f.accepted) >= -1e-12)
    assert np.all(f.phi[exit_mask & passable] == 0)
    ok = np.isfinite(f.phi)
    assert np.all(f.phi[ok] >= 0)
