"""Self-check suite behind ``segreflow validate``.

Each check is a small, deterministic experiment returning
``(passed, detail)``. Checks are independent and may run in a process pool.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

import numpy as np

from .flow import StopRule, directional_derivative, h1_norm, run_flow
from .grid import build_grid
from .kop import State, pseudogradient, solve_K
from .linops import LinearOperator
from .nonlin import NonlinearitySpec, check_inequalities
from .partition import oracle_1d
from .spectrum import dirichlet_eigs

__all__ = ["CHECKS", "run_check", "run_suite", "format_table"]


def check_nonlin(seed: int) -> tuple[bool, str]:
    worst = 0.0
    for n in (1.0, 5.0, 100.0):
        rep = check_inequalities(NonlinearitySpec(1, 0.0, 1.0, n=n, p=1.5, q=2.0), 100_000, seed)
        worst = max(worst, max(rep.violations.values()))
    return worst <= 1e-12, f"max relative violation {worst:.2e} (n in 1, 5, 100)"


def check_spectrum_1d(seed: int) -> tuple[bool, str]:
    g = build_grid(1.0, 2000)
    res = dirichlet_eigs(LinearOperator(g), 3, seed=seed)
    h = g.spacing[0]
    exact = 4 / h**2 * np.sin(np.arange(1, 4) * np.pi * h / 2) ** 2
    rel = float(np.max(np.abs(res.values - exact) / exact))
    cont = abs(res.values[0] / math.pi**2 - 1), abs(res.values[1] / (4 * math.pi**2) - 1)
    ok = rel <= 1e-10 and max(cont) <= 0.01
    return ok, f"discrete rel err {rel:.1e}; continuum rel err {max(cont):.1e}"


def check_spectrum_square(seed: int) -> tuple[bool, str]:
    g = build_grid((1.0, 1.0), (63, 63))
    res = dirichlet_eigs(LinearOperator(g), 3, seed=seed)
    target = np.array([2, 5, 5]) * math.pi**2
    rel = float(np.max(np.abs(res.values - target) / target))
    return rel <= 0.01, f"lambda/pi^2 = {np.round(res.values / math.pi**2, 4).tolist()}"


def check_k_fixed_point(seed: int) -> tuple[bool, str]:
    g = build_grid(1.0, 1000)
    e = dirichlet_eigs(LinearOperator(g), 1, seed=seed)
    u = State(g, e.vectors[:1])
    r = solve_K(u, NonlinearitySpec(1, 0.0, 1.0))
    dw = math.sqrt(g.cell_volume) * float(np.linalg.norm(r.w[0] - e.vectors[0]))
    dmu = abs(float(r.mu[0]) - float(e.values[0]))
    return dw <= 1e-7 and dmu <= 1e-6, f"||w - phi1|| = {dw:.1e}, |mu - lambda1| = {dmu:.1e}"


def _random_state(g, m, rng) -> State:
    x = g.axis(0)
    vals = []
    for _ in range(m):
        c = rng.standard_normal(6) / np.arange(1, 7)
        vals.append(sum(ci * np.sin((j + 1) * np.pi * x) for j, ci in enumerate(c)))
    return State(g, np.stack(vals)).normalized()


def check_pseudogradient(seed: int) -> tuple[bool, str]:
    g = build_grid(1.0, 400)
    rng = np.random.default_rng(seed)
    worst = math.inf
    for beta in (1.0, 50.0):
        spec = NonlinearitySpec(2, 0.0, beta)
        for _ in range(10):
            u = _random_state(g, 2, rng)
            v = pseudogradient(u, solve_K(u, spec))
            lhs = directional_derivative(u, spec, v)
            rhs = 2 * h1_norm(g, v) ** 2
            worst = min(worst, (lhs - rhs) / max(1.0, abs(lhs)))
    return worst >= -1e-6, f"min relative slack {worst:.2e}"


def check_flow(seed: int) -> tuple[bool, str]:
    g = build_grid(1.0, 300)
    rng = np.random.default_rng(seed)
    u = State(g, np.abs(_random_state(g, 2, rng).values)).normalized()
    res = run_flow(u, NonlinearitySpec(2, 0.0, 10.0), stop=StopRule(1e-6, 5000))
    j = res.trace.column("J")
    mono = bool(np.all(np.diff(j) <= 1e-9))
    norms = float(np.max(res.trace.column("norm_error")))
    ok = mono and norms <= 1e-12 and res.status == "converged"
    return ok, f"{res.status} in {len(res.trace) - 1} steps; monotone={mono}; norm drift {norms:.1e}"


def check_oracle(seed: int) -> tuple[bool, str]:
    r = oracle_1d(2, (2, 2), 8)
    ok = abs(r.value - 32 * math.pi**2) <= 1e-9 and "00001111" in r.layouts and "00110011" in r.layouts
    return ok, f"value/pi^2 = {r.value / math.pi**2:.6f}, layouts {', '.join(r.layouts)}"


CHECKS: dict[str, Callable[[int], tuple[bool, str]]] = {
    "nonlinearity inequalities": check_nonlin,
    "spectrum 1D": check_spectrum_1d,
    "spectrum unit square": check_spectrum_square,
    "K fixed point": check_k_fixed_point,
    "pseudogradient inequality": check_pseudogradient,
    "flow monotonicity": check_flow,
    "1D partition oracle": check_oracle,
}


def run_check(name: str, seed: int = 0) -> tuple[str, bool, str]:
    try:
        ok, detail = CHECKS[name](seed)
    except Exception as exc:  # a crashing check is a failing check
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return name, bool(ok), detail


def run_suite(seed: int = 0, workers: int = 1) -> list[tuple[str, bool, str]]:
    names = list(CHECKS)
    if workers <= 1:
        return [run_check(n, seed) for n in names]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_check, names, [seed] * len(names)))


def format_table(rows: list[tuple[str, bool, str]]) -> str:
    width = max(len(r[0]) for r in rows)
    lines = [f"{'check':<{width}}  result  detail"]
    for name, ok, detail in rows:
        lines.append(f"{name:<{width}}  {'PASS' if ok else 'FAIL':<6}  {detail}")
    return "\n".join(lines)
