import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segreflow.errors import ConfigError
from segreflow.flow import StopRule
from segreflow.grid import build_grid
from segreflow.kop import State
from segreflow.ladder import ladder_exponents, norm_ladder, run_ladder
from segreflow.nonlin import NonlinearitySpec
from segreflow.seed import default_trial_partition, seed_from_partition


def test_exponents():
    np.testing.assert_array_equal(ladder_exponents(4) - 2, [0, 4, 16, 52])
    np.testing.assert_array_equal(ladder_exponents(3, 4.0), [2, 4, 8])
    with pytest.raises(ConfigError):
        ladder_exponents(0)
    with pytest.raises(ConfigError):
        ladder_exponents(3, 2.0)


@pytest.mark.parametrize("c", [0.5, 1.0, 3.0])
def test_constant_field_norms(c):
    n = 99
    g = build_grid(1.0, n)
    u = State(g, np.full((1, n), c))
    measure = n / (n + 1)
    expect = c * measure ** (1 / ladder_exponents(4))
    np.testing.assert_allclose(norm_ladder(u, 4)[:, 0], expect, rtol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ladder_norms_bounded_by_sup(seed):
    g = build_grid(1.0, 64)
    v = np.random.default_rng(seed).standard_normal((2, 64)) * 1e3
    out = norm_ladder(State(g, v), 5)
    top = np.max(np.abs(v), axis=1)
    assert np.all(out <= top[None, :] * (1 + 1e-12))
    assert np.all(np.isfinite(out))


@pytest.fixture(scope="module")
def small_ladder():
    g = build_grid(1.0, 200)
    tp = default_trial_partition(g, 2, (1, 1))
    u0 = seed_from_partition(tp, (1, 1))
    x = g.axis(0)
    # overlap the supports so the flow has something to do
    u0 = State(g, u0.values + 0.3 * np.sin(np.pi * x)).normalized()
    return run_ladder(u0, NonlinearitySpec(2, 0.0, 1.0), (1, 1), [1.0, 10.0, 100.0], stop=StopRule(1e-6, 5000))


def test_ladder_rungs(small_ladder):
    rep = small_ladder
    assert [r.status for r in rep.rungs] == ["converged"] * 3
    j = rep.column("J")
    assert j[0] < j[1] < j[2]
    assert rep.rungs[0].cauchy_l2 is None and rep.rungs[1].cauchy_l2 > 0
    assert rep.final.partition_energy / math.pi**2 == pytest.approx(8, rel=0.1)
    assert rep.state is not None


def test_ladder_serialises(small_ladder):
    doc = json.loads(small_ladder.to_json())
    assert doc["schedule"] == [1.0, 10.0, 100.0]
    assert len(doc["rungs"]) == 3 and "norm_ladder" in doc["rungs"][0]
    rows = small_ladder.rows()
    assert {"beta", "J", "lambda_0", "lambda_1"} <= set(rows[0])


@pytest.mark.parametrize("schedule", [[], [1.0, 1.0], [10.0, 1.0], [-1.0]])
def test_schedule_validation(schedule):
    g = build_grid(1.0, 20)
    u = State(g, np.ones((2, 20))).normalized()
    with pytest.raises(ConfigError):
        run_ladder(u, NonlinearitySpec(2, 0.0, 1.0), (1, 1), schedule)
