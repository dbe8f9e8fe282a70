import math

import numpy as np
import pytest

from segreflow.grid import build_grid
from segreflow.kop import State
from segreflow.linops import LinearOperator
from segreflow.spectrum import dirichlet_eigs

PI2 = math.pi**2


@pytest.fixture(scope="session")
def grid1d():
    return build_grid(1.0, 1000)


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(1.0, 200)


@pytest.fixture(scope="session")
def eigs1d(grid1d):
    return dirichlet_eigs(LinearOperator(grid1d), 3)


def random_state(grid, m, rng, modes=6, positive=False):
    """Unit-norm state built from random low sine modes (1D)."""
    x = grid.axis(0)
    vals = []
    for _ in range(m):
        c = rng.standard_normal(modes) / np.arange(1, modes + 1)
        v = sum(ci * np.sin((j + 1) * np.pi * x) for j, ci in enumerate(c))
        vals.append(np.abs(v) if positive else v)
    return State(grid, np.stack(vals)).normalized()


def l2(grid, v):
    return math.sqrt(grid.cell_volume * float(np.sum(np.asarray(v) ** 2)))


# acceptance criteria append (number, passed, detail); printed after the run
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
