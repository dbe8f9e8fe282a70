import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from segreflow.errors import ConfigError, EmptySupportError, GridMismatchError
from segreflow.grid import Field, SubdomainMask, build_grid, l2_inner, l2_norm, rectangle_mask, support_mask


@pytest.mark.parametrize(
    "extents, counts, h",
    [
        (1.0, 1000, 1 / 1001),
        ((1.0, 1.0), (127, 127), 1 / 128),
        ((2.0, 1.0), (9, 4), 0.2),
    ],
)
def test_spacing(extents, counts, h):
    g = build_grid(extents, counts)
    assert g.spacing[0] == pytest.approx(h, rel=1e-15)
    assert g.size == int(np.prod(counts))


@pytest.mark.parametrize(
    "extents, counts",
    [(0.0, 10), (-1.0, 10), (1.0, 2), ((1.0, 1.0), (10,)), ((1, 1, 1), (5, 5, 5)), (float("nan"), 5)],
)
def test_build_grid_rejects(extents, counts):
    with pytest.raises(ConfigError):
        build_grid(extents, counts)


def test_l2_inner_examples():
    g = build_grid(0.999 + 1e-3, 999)  # h = 1e-3
    assert g.spacing[0] == pytest.approx(1e-3)
    one = Field(g, np.ones(999))
    assert l2_inner(one, one) == pytest.approx(0.999, rel=1e-12)

    g = build_grid(1.0, 500)
    a = g.sample(lambda x: np.sin(math.pi * x))
    b = g.sample(lambda x: np.sin(2 * math.pi * x))
    assert abs(l2_inner(a, b)) <= 1e-12
    assert l2_inner(g.zeros(), a) == 0.0


def test_grid_mismatch():
    a = build_grid(1.0, 10).zeros()
    b = build_grid(1.0, 11).zeros()
    with pytest.raises(GridMismatchError):
        l2_inner(a, b)
    with pytest.raises(GridMismatchError):
        a + b


def test_field_is_readonly_and_finite():
    g = build_grid(1.0, 5)
    f = Field(g, np.arange(5.0))
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        Field(g, [0, 1, np.inf, 0, 0])
    with pytest.raises(GridMismatchError):
        Field(g, np.zeros(4))


vec = arrays(np.float64, 40, elements=st.floats(-1e3, 1e3))


@settings(max_examples=200, deadline=None)
@given(vec, vec, vec, st.floats(-10, 10))
def test_l2_inner_bilinear_symmetric(a, b, c, s):
    g = build_grid(1.0, 40)
    fa, fb, fc = Field(g, a), Field(g, b), Field(g, c)
    scale = 1 + g.cell_volume * float(np.sum((np.abs(s * a) + np.abs(c)) * np.abs(b)))
    assert l2_inner(fa, fb) == l2_inner(fb, fa)
    lhs = l2_inner(fa * s + fc, fb)
    rhs = s * l2_inner(fa, fb) + l2_inner(fc, fb)
    assert abs(lhs - rhs) <= 1e-12 * scale
    assert l2_inner(fa, fa) >= 0


def test_support_mask_level_set():
    g = build_grid(1.0, 999)
    u = g.sample(lambda x: np.sin(math.pi * x))
    mk = support_mask(u, 0.5)
    x = g.axis(0)[mk.values]
    h = g.spacing[0]
    assert abs(x.min() - 1 / 6) <= h and abs(x.max() - 5 / 6) <= h


def test_support_mask_two_components():
    g = build_grid(1.0, 1000)
    u = g.sample(lambda x: np.sin(2 * math.pi * x))
    mk = support_mask(u, 1e-2)
    assert mk.n_components() == 2
    gap = g.axis(0)[~mk.values]
    gap = gap[(gap > 0.1) & (gap < 0.9)]
    assert gap.size > 0 and np.all(np.abs(gap - 0.5) < 0.01)


def test_support_mask_errors():
    g = build_grid(1.0, 10)
    with pytest.raises(EmptySupportError):
        support_mask(g.zeros(), 0.1)
    with pytest.raises(ConfigError):
        support_mask(g.sample(lambda x: x), 1.0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 30, elements=st.floats(-1, 1)), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_support_mask_monotone_in_tol(v, t1, t2):
    g = build_grid(1.0, 30)
    u = Field(g, v)
    if not np.any(v):
        return
    lo, hi = sorted((t1, t2))
    big, small = support_mask(u, lo).values, support_mask(u, hi).values
    assert np.all(big | ~small)


def test_rectangle_mask_disjoint_faces():
    g = build_grid((1.0, 1.0), (15, 15))  # nodes on multiples of 1/16, so x = 1/2 is a node
    left = rectangle_mask(g, [[[0, 0.5], [0, 1]]])
    right = rectangle_mask(g, [[[0.5, 1], [0, 1]]])
    assert not np.any(left.values & right.values)
    assert (left | right).count == g.size - 15
    with pytest.raises(ConfigError):
        rectangle_mask(g, [[[0.5, 0.5], [0, 1]]])


def test_subdomain_mask_ops():
    g = build_grid(1.0, 8)
    a = SubdomainMask(g, [1, 1, 0, 0, 0, 0, 1, 1])
    b = SubdomainMask(g, [0, 1, 1, 0, 0, 0, 0, 0])
    assert a.n_components() == 2
    assert (a & b).count == 1
    assert (a | b).count == 5
    assert a.measure == pytest.approx(4 / 9)
