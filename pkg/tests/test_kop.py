import math

import numpy as np
import pytest

from conftest import l2, random_state
from segreflow.errors import ConfigError
from segreflow.flow import directional_derivative, h1_norm
from segreflow.grid import build_grid
from segreflow.kop import State, pseudogradient, solve_K
from segreflow.linops import LinearOperator
from segreflow.nonlin import NonlinearitySpec
from segreflow.spectrum import dirichlet_eigs


def test_fixed_point_of_single_component(grid1d, eigs1d):
    u = State(grid1d, eigs1d.vectors[:1])
    r = solve_K(u, NonlinearitySpec(1, 0.0, 1.0))
    assert l2(grid1d, r.w[0] - eigs1d.vectors[0]) <= 1e-7
    assert abs(r.mu[0] - eigs1d.values[0]) <= 1e-6
    assert np.all(pseudogradient(u, r) == u.values - r.w)


def test_constraint_and_tangency(small_grid):
    rng = np.random.default_rng(11)
    spec = NonlinearitySpec(3, 0.0, 20.0)
    for _ in range(5):
        u = random_state(small_grid, 3, rng)
        r = solve_K(u, spec)
        h = small_grid.cell_volume
        dots = h * np.sum(u.values * r.w, axis=1)
        np.testing.assert_allclose(dots, 1.0, atol=1e-12)
        v = pseudogradient(u, r)
        assert np.all(np.abs(h * np.sum(u.values * v, axis=1)) <= 1e-10)
        assert np.all(r.residuals <= 1e-8)


def test_linear_and_newton_paths_agree(small_grid):
    rng = np.random.default_rng(5)
    spec = NonlinearitySpec(2, 0.0, 10.0)
    for _ in range(20):
        u = random_state(small_grid, 2, rng)
        a = solve_K(u, spec)
        b = solve_K(u, spec, force_newton=True)
        assert l2(small_grid, a.w - b.w) <= 1e-7
        np.testing.assert_allclose(a.mu, b.mu, rtol=1e-6)


def test_newton_unique_from_different_starts(small_grid):
    rng = np.random.default_rng(2)
    spec = NonlinearitySpec(2, (1.0, 0.5), 5.0, n=2.0)
    u = random_state(small_grid, 2, rng)
    base = solve_K(u, spec)
    for _ in range(3):
        warm = rng.standard_normal(u.values.shape) + u.values
        other = solve_K(u, spec, warm=warm)
        assert l2(small_grid, base.w - other.w) <= 1e-7


@pytest.mark.parametrize("beta", [1.0, 100.0])
@pytest.mark.parametrize("spec_kw", [dict(), dict(a=(1.0, 1.0), n=3.0)])
def test_pseudogradient_inequality(small_grid, beta, spec_kw):
    rng = np.random.default_rng(int(beta))
    spec = NonlinearitySpec(2, spec_kw.get("a", 0.0), beta, n=spec_kw.get("n"))
    for _ in range(8):
        u = random_state(small_grid, 2, rng)
        v = pseudogradient(u, solve_K(u, spec))
        lhs = directional_derivative(u, spec, v)
        rhs = 2 * h1_norm(small_grid, v) ** 2
        assert (lhs - rhs) / max(1.0, abs(lhs)) >= -1e-6


def test_outside_mstar_is_rejected(small_grid):
    rng = np.random.default_rng(0)
    u = random_state(small_grid, 2, rng)
    shrunk = State(small_grid, u.values * np.array([[1.0], [0.4]]))
    with pytest.raises(ConfigError):
        solve_K(shrunk, NonlinearitySpec(2, 0.0, 1.0))


def test_component_count_mismatch(small_grid):
    u = random_state(small_grid, 2, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        solve_K(u, NonlinearitySpec(3, 0.0, 1.0))


def test_two_dimensional_fixed_point():
    g = build_grid((1.0, 1.0), (31, 31))
    e = dirichlet_eigs(LinearOperator(g), 1)
    u = State(g, e.vectors[:1])
    r = solve_K(u, NonlinearitySpec(1, 0.0, 1.0))
    assert l2(g, r.w[0] - e.vectors[0]) <= 1e-7
    assert r.mu[0] == pytest.approx(e.values[0], rel=1e-8)


def test_state_helpers(small_grid):
    u = random_state(small_grid, 2, np.random.default_rng(1))
    assert u.on_manifold() and u.in_mstar()
    with pytest.raises(ValueError):
        State(small_grid, np.full((2,) + small_grid.shape, math.nan))


def test_newton_from_rough_start_reaches_tolerance(grid1d):
    # high-frequency warm starts used to stall the line search at round-off
    rng = np.random.default_rng(0)
    spec = NonlinearitySpec(2, 0.0, 10.0)
    u = random_state(grid1d, 2, rng)
    r = solve_K(u, spec, warm=u.values + rng.standard_normal(u.values.shape), force_newton=True)
    assert np.all(r.residuals <= 1e-8)
