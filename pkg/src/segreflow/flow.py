"""Normalized pseudogradient flow ``du/dt = -V(u)`` on the product of L2 spheres.

The continuous flow is discretised by explicit Euler followed by exact
renormalisation of every component, with backtracking on ``dt`` so that
``J`` never increases on an accepted step.

An optional reflection symmetry keeps every ``k_i = 2`` component odd
under ``x_0 -> L_0 - x_0``. ``K`` commutes with the reflection, so the
odd subspace is invariant under the exact flow; projecting after every
step only removes round-off that would otherwise grow along the unstable
even directions of a sign-changing saddle.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError
from .grid import Grid
from .kop import KSolveResult, State, coupling_potential, pseudogradient, solve_K
from .linops import _cached_laplacian
from .nonlin import NonlinearitySpec

__all__ = [
    "energy_J",
    "energy_gradient",
    "directional_derivative",
    "h1_norm",
    "rayleigh_multipliers",
    "system_residuals",
    "sign_norms",
    "ConeDistance",
    "cone_distance",
    "ConeParams",
    "StopRule",
    "parity_for",
    "project_parity",
    "flow_step",
    "FlowTrace",
    "FlowResult",
    "run_flow",
]

log = logging.getLogger(__name__)

CONE_DELTA_MAX = math.sqrt(2) / 2


def _flat(u: State) -> np.ndarray:
    return u.values.reshape(u.m, -1)


def _quad(grid: Grid, v: np.ndarray) -> float:
    """``int |grad v|^2`` for a flat array."""
    lap = _cached_laplacian(grid)
    return grid.cell_volume * float(np.dot(lap @ v, v))


def h1_norm(grid: Grid, v: np.ndarray) -> float:
    """Discrete ``(sum_i int |grad v_i|^2)^(1/2)`` of an ``(m, *shape)`` array."""
    flat = np.asarray(v).reshape(-1, grid.size)
    return math.sqrt(max(sum(_quad(grid, row) for row in flat), 0.0))


def energy_J(u: State, spec: NonlinearitySpec) -> float:
    """``sum_i int |grad u_i|^2 + 2 a_i G(u_i) + sum_{i != j} int F(u_i) F(u_j)``."""
    grid = u.grid
    flat = _flat(u)
    w = grid.cell_volume
    total = 0.0
    big_f = np.stack([spec.F(row) for row in flat])
    for i in range(u.m):
        total += _quad(grid, flat[i])
        if spec.a[i]:
            total += 2 * spec.a[i] * w * float(np.sum(spec.G(flat[i])))
    col = big_f.sum(axis=0)
    # sum_{i != j} F_i F_j = (sum F)^2 - sum F^2
    total += w * float(np.sum(col * col - np.sum(big_f * big_f, axis=0)))
    return total


def energy_gradient(u: State, spec: NonlinearitySpec) -> np.ndarray:
    """L2 representative of ``J'(u)``: ``2(-Delta u_i + a_i g(u_i) + f(u_i) S_i)``."""
    lap = _cached_laplacian(u.grid)
    flat = _flat(u)
    out = np.empty_like(flat)
    for i in range(u.m):
        out[i] = lap @ flat[i] + spec.a[i] * spec.g(flat[i]) + spec.f(flat[i]) * coupling_potential(u, spec, i)
    return 2 * out.reshape(u.values.shape)


def directional_derivative(u: State, spec: NonlinearitySpec, v: np.ndarray) -> float:
    """``J'(u)[v]`` in the discrete L2 pairing."""
    return u.grid.cell_volume * float(np.sum(energy_gradient(u, spec) * v))


def _equation_terms(u: State, spec: NonlinearitySpec) -> np.ndarray:
    lap = _cached_laplacian(u.grid)
    flat = _flat(u)
    return np.stack(
        [
            lap @ flat[i] + spec.a[i] * spec.g(flat[i]) + spec.f(flat[i]) * coupling_potential(u, spec, i)
            for i in range(u.m)
        ]
    )


def rayleigh_multipliers(u: State, spec: NonlinearitySpec) -> np.ndarray:
    """``lambda_i = <-Delta u_i + a_i g(u_i) + f(u_i) S_i, u_i> / ||u_i||^2``."""
    flat = _flat(u)
    terms = _equation_terms(u, spec)
    return np.einsum("ij,ij->i", terms, flat) / np.einsum("ij,ij->i", flat, flat)


def system_residuals(u: State, spec: NonlinearitySpec, lam: np.ndarray | None = None) -> np.ndarray:
    """Discrete L2 norms of ``-Delta u_i + a_i g(u_i) + f(u_i) S_i - lambda_i u_i``."""
    if lam is None:
        lam = rayleigh_multipliers(u, spec)
    flat = _flat(u)
    r = _equation_terms(u, spec) - np.asarray(lam)[:, None] * flat
    return np.sqrt(u.grid.cell_volume) * np.linalg.norm(r, axis=1)


def sign_norms(u: State) -> np.ndarray:
    """``(m, 2)`` array of ``(||u_i^+||_2, ||u_i^-||_2)``."""
    flat = _flat(u)
    w = u.grid.cell_volume
    pos = np.sqrt(w * np.sum(np.maximum(flat, 0.0) ** 2, axis=1))
    neg = np.sqrt(w * np.sum(np.minimum(flat, 0.0) ** 2, axis=1))
    return np.column_stack([pos, neg])


class ConeDistance(NamedTuple):
    distance: float
    component: int
    sign: int  # +1: distance to P_i (= ||u_i^-||), -1: distance to -P_i (= ||u_i^+||)


def cone_distance(u: State, components: Sequence[int] | None = None) -> ConeDistance:
    """``dist_2(u, P) = min_i min(||u_i^-||_2, ||u_i^+||_2)``.

    ``components`` restricts the minimum, e.g. to the sign-changing ones
    of a mixed ``k`` run.
    """
    sn = sign_norms(u)
    idx = list(range(u.m)) if components is None else list(components)
    if not idx:
        raise ConfigError("cone distance over an empty component set", field="k")
    best = (math.inf, -1, 0)
    for i in idx:
        pos, neg = sn[i]
        if neg < best[0]:
            best = (float(neg), i, 1)
        if pos < best[0]:
            best = (float(pos), i, -1)
    return ConeDistance(*best)


@dataclass(frozen=True)
class ConeParams:
    """Radius ``delta`` of the cone neighbourhood ``P_delta``."""

    delta: float = 0.1

    def __post_init__(self):
        if not 0 < self.delta < CONE_DELTA_MAX:
            raise ConfigError(
                f"cone_delta must lie in (0, sqrt(2)/2 = {CONE_DELTA_MAX:.6f}), got {self.delta}",
                field="cone_delta",
            )


@dataclass(frozen=True)
class StopRule:
    """When to stop a flow run.

    Convergence needs ``||V||_H1 <= residual_tol`` and, per component,
    the discrete system residual with Rayleigh multipliers at most
    ``certificate_factor * residual_tol``.
    """

    residual_tol: float = 1e-6
    max_steps: int = 50_000
    max_time: float | None = None  # seconds; None means unlimited
    certificate_factor: float = 10.0

    def __post_init__(self):
        if not self.residual_tol > 0:
            raise ConfigError("residual_tol must be positive", field="flow.residual_tol")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1", field="flow.max_steps")
        if self.max_time is not None and not self.max_time > 0:
            raise ConfigError("max_time must be positive", field="flow.max_time")


def parity_for(k: Sequence[int], symmetry: str) -> np.ndarray | None:
    """Per-component parity under reflection of axis 0.

    ``-1`` (odd) for ``k_i = 2`` components and ``0`` (unconstrained)
    otherwise; ``None`` when ``symmetry == "none"``.
    """
    if symmetry == "none":
        return None
    if symmetry != "reflect":
        raise ConfigError(f"symmetry must be 'none' or 'reflect', got {symmetry!r}", field="symmetry")
    return np.array([-1 if ki == 2 else 0 for ki in k], dtype=int)


def project_parity(values: np.ndarray, parity: np.ndarray | None) -> np.ndarray:
    """Project components onto even (``+1``) / odd (``-1``) parts; ``0`` leaves them."""
    if parity is None:
        return values
    out = np.array(values, dtype=float)
    for i, s in enumerate(parity):
        if s:
            out[i] = 0.5 * (out[i] + s * out[i][::-1])
    return out


def _renormalize(grid: Grid, values: np.ndarray) -> np.ndarray:
    flat = values.reshape(values.shape[0], -1)
    norms = np.sqrt(grid.cell_volume * np.einsum("ij,ij->i", flat, flat))
    return values / norms.reshape((-1,) + (1,) * grid.dim)


def flow_step(
    u: State,
    dt: float,
    spec: NonlinearitySpec,
    kres: KSolveResult | None = None,
    parity: np.ndarray | None = None,
) -> State:
    """One explicit Euler step ``u - dt V(u)`` followed by renormalisation."""
    if not 0 < dt <= 1:
        raise ConfigError(f"dt must lie in (0, 1], got {dt}", field="flow.dt")
    if kres is None:
        kres = solve_K(u, spec)
    v = pseudogradient(u, kres)
    nxt = project_parity(u.values - dt * v, parity)
    return State(u.grid, _renormalize(u.grid, nxt))


@dataclass
class FlowTrace:
    """One row per accepted step plus the initial state."""

    m: int
    rows: list[dict] = field(default_factory=list)

    def record(self, **row) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    @property
    def fieldnames(self) -> list[str]:
        names = ["step", "time", "J", "residual", "cone_distance", "cone_component", "dt", "norm_error"]
        for i in range(self.m):
            names += [f"lambda_{i}", f"pos_{i}", f"neg_{i}"]
        return names

    def to_csv(self, fh: io.TextIOBase | None = None) -> str | None:
        """Write the trace as CSV; returns the text when ``fh`` is None."""
        buf = io.StringIO() if fh is None else fh
        writer = csv.DictWriter(buf, fieldnames=self.fieldnames, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue() if fh is None else None


class FlowResult(NamedTuple):
    state: State
    trace: FlowTrace
    status: str  # "converged" or "budget-exhausted"
    kres: KSolveResult
    reason: str = ""


def _accept_slack(j: float) -> float:
    # J is a sum of O(n) terms; allow a few ulps of relative round-off
    return 8 * np.finfo(float).eps * max(1.0, abs(j))


def run_flow(
    u0: State,
    spec: NonlinearitySpec,
    cone: ConeParams | None = None,
    stop: StopRule | None = None,
    parity: np.ndarray | None = None,
    dt0: float = 0.1,
    dt_max: float = 0.5,
    k_tol: float = 1e-8,
    cg_tol: float = 1e-10,
    cone_components: Sequence[int] | None = None,
    callback: Callable[[int, State, float], None] | None = None,
) -> FlowResult:
    """Integrate the flow from ``u0`` until ``||V||_H1 <= tol`` or the budget runs out.

    Steps that would increase ``J`` are rejected and retried with half
    the step; after five consecutive accepts ``dt`` grows by 1.2 up to
    ``dt_max``. ``cone`` only affects what is recorded: the distance to
    ``P`` is traced so that callers can check invariance of ``P_delta``.
    """
    cone = cone or ConeParams()
    stop = stop or StopRule()
    if not 0 < dt0 <= dt_max <= 1:
        raise ConfigError("need 0 < dt0 <= dt_max <= 1", field="flow.dt0")
    grid = u0.grid
    u = State(grid, _renormalize(grid, project_parity(u0.values, parity)))
    trace = FlowTrace(u.m)
    kres = solve_K(u, spec, tol=k_tol, cg_tol=cg_tol)
    j = energy_J(u, spec)
    t = 0.0
    dt = dt0
    streak = 0
    start = time.monotonic()

    def record(step: int) -> float:
        v = pseudogradient(u, kres)
        res = h1_norm(grid, v)
        cd = cone_distance(u, cone_components)
        lam = rayleigh_multipliers(u, spec)
        sn = sign_norms(u)
        row = dict(
            step=step,
            time=t,
            J=j,
            residual=res,
            cone_distance=cd.distance,
            cone_component=cd.component,
            dt=dt,
            norm_error=float(np.max(np.abs(u.norms - 1.0))),
        )
        for i in range(u.m):
            row[f"lambda_{i}"] = float(lam[i])
            row[f"pos_{i}"] = float(sn[i, 0])
            row[f"neg_{i}"] = float(sn[i, 1])
        trace.record(**row)
        return res

    res = record(0)
    step = 0
    reason = ""
    while True:
        if res <= stop.residual_tol and np.all(
            system_residuals(u, spec) <= stop.certificate_factor * stop.residual_tol
        ):
            log.info("flow converged after %d steps: J=%.10g residual=%.2e", step, j, res)
            return FlowResult(u, trace, "converged", kres, "residual below tolerance")
        if step >= stop.max_steps:
            reason = f"max_steps={stop.max_steps} reached"
            break
        if stop.max_time is not None and time.monotonic() - start > stop.max_time:
            reason = f"max_time={stop.max_time}s reached"
            break
        while True:
            cand = flow_step(u, dt, spec, kres, parity)
            jc = energy_J(cand, spec)
            if jc <= j + _accept_slack(j):
                break
            dt *= 0.5
            streak = 0
            if dt < 1e-14:
                reason = "step size underflow"
                log.warning("flow step size underflow at residual %.2e", res)
                return FlowResult(u, trace, "budget-exhausted", kres, reason)
        u, j = cand, jc
        t += dt
        step += 1
        streak += 1
        if streak >= 5:
            dt = min(1.2 * dt, dt_max)
            streak = 0
        kres = solve_K(u, spec, tol=k_tol, warm=kres, cg_tol=cg_tol)
        res = record(step)
        if callback is not None:
            callback(step, u, j)
        if step % 500 == 0:
            log.debug("flow step %d: J=%.10g residual=%.3e dt=%.3g", step, j, res, dt)
    log.info("flow stopped (%s): J=%.10g residual=%.2e", reason, j, res)
    return FlowResult(u, trace, "budget-exhausted", kres, reason)
