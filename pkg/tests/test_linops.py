import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segreflow.errors import ConfigError, ConvergenceError, GridMismatchError
from segreflow.grid import Field, build_grid, l2_inner
from segreflow.linops import LinearOperator, apply, cg_solve, h1_inner, pcg


def test_discrete_eigenvector_1d():
    g = build_grid(1.0, 200)
    h = g.spacing[0]
    for k in (1, 2, 7):
        u = g.sample(lambda x: np.sin(k * math.pi * x))
        lam = 4 / h**2 * math.sin(k * math.pi * h / 2) ** 2
        out = apply(LinearOperator(g), u)
        assert np.max(np.abs(out.values - lam * u.values)) <= 1e-9 * lam


def test_constant_potential_shift():
    g = build_grid((1.0, 2.0), (7, 9))
    rng = np.random.default_rng(1)
    u = Field(g, rng.standard_normal(g.shape))
    a0 = apply(LinearOperator(g), u)
    ac = apply(LinearOperator(g, np.full(g.shape, 3.5)), u)
    np.testing.assert_allclose(ac.values, a0.values + 3.5 * u.values, rtol=1e-13, atol=1e-10)


def test_five_point_stencil():
    g = build_grid((1.0, 1.0), (3, 3))
    h = g.spacing[0]
    e = np.zeros((3, 3))
    e[1, 1] = 1
    out = apply(LinearOperator(g), Field(g, e)).values * h**2
    expect = np.array([[0, -1, 0], [-1, 4, -1], [0, -1, 0]], dtype=float)
    np.testing.assert_allclose(out, expect, atol=1e-12)


@pytest.mark.parametrize("shape", [(50,), (12, 9)])
def test_apply_symmetric_random_pairs(shape):
    g = build_grid((1.0,) * len(shape), shape)
    rng = np.random.default_rng(7)
    mask = rng.random(shape) > 0.3
    for mk in (None, mask):
        op = LinearOperator(g, rng.random(shape) * 10, mk)
        for _ in range(100):
            a = Field(g, rng.standard_normal(shape))
            b = Field(g, rng.standard_normal(shape))
            lhs, rhs = l2_inner(apply(op, a), b), l2_inner(a, apply(op, b))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_masked_operator_ignores_outside():
    g = build_grid(1.0, 20)
    mask = np.zeros(20, dtype=bool)
    mask[5:15] = True
    op = LinearOperator(g, mask=mask)
    u = np.zeros(20)
    u[:5] = 3.0
    assert np.all(apply(op, Field(g, u)).values == 0)


def test_potential_validation():
    g = build_grid(1.0, 5)
    with pytest.raises(ConfigError):
        LinearOperator(g, -np.ones(5))
    with pytest.raises(GridMismatchError):
        LinearOperator(g, np.ones(4))


def test_cg_recovers_known_solution():
    g = build_grid((1.0, 1.0), (30, 30))
    rng = np.random.default_rng(3)
    op = LinearOperator(g, rng.random(g.shape) * 100)
    x = Field(g, rng.standard_normal(g.shape))
    rhs = apply(op, x)
    sol = cg_solve(op, rhs)
    assert np.linalg.norm(sol.values - x.values) <= 1e-8 * np.linalg.norm(x.values)


def test_cg_zero_rhs_and_eigenvector():
    g = build_grid(1.0, 300)
    op = LinearOperator(g)
    assert np.all(cg_solve(op, g.zeros()).values == 0)
    h = g.spacing[0]
    phi = g.sample(lambda x: np.sin(math.pi * x))
    lam = 4 / h**2 * math.sin(math.pi * h / 2) ** 2
    sol = cg_solve(op, phi)
    np.testing.assert_allclose(sol.values, phi.values / lam, rtol=1e-8, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(5, 60), st.floats(0, 1e4), st.integers(0, 2**32 - 1), st.floats(1e-10, 1e-3))
def test_cg_residual_contract(n, vmax, seed, tol):
    g = build_grid(1.0, n)
    rng = np.random.default_rng(seed)
    op = LinearOperator(g, rng.random(n) * vmax)
    rhs = Field(g, rng.standard_normal(n))
    x = cg_solve(op, rhs, rel_tol=tol)
    r = apply(op, x).values - rhs.values
    assert np.linalg.norm(r) <= tol * np.linalg.norm(rhs.values)


def test_cg_budget_error_carries_residual():
    g = build_grid(1.0, 500)
    rhs = Field(g, np.random.default_rng(0).standard_normal(500))
    with pytest.raises(ConvergenceError) as info:
        cg_solve(LinearOperator(g), rhs, rel_tol=1e-12, max_iter=3)
    assert info.value.residual > 1e-12


def test_pcg_rejects_bad_tolerance():
    g = build_grid(1.0, 5)
    with pytest.raises(ConfigError):
        pcg(LinearOperator(g), np.ones(5), rel_tol=1.5)


def test_h1_inner_matches_dirichlet_energy():
    g = build_grid(1.0, 400)
    u = g.sample(lambda x: np.sin(math.pi * x))
    # discrete energy of sin(pi x) equals lambda_1^h * ||u||^2 = (4/h^2) sin^2(pi h/2) / 2
    h = g.spacing[0]
    expect = 4 / h**2 * math.sin(math.pi * h / 2) ** 2 * l2_inner(u, u)
    assert h1_inner(g, u.values, u.values) == pytest.approx(expect, rel=1e-12)
