"""Orchestration shared by the CLI and the acceptance tests.

``prepare`` turns a :class:`RunConfig` into grid, kernels, trial partition
and seed; ``solve`` and ``ladder`` run the flow and assemble the
deterministic summaries written by the CLI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import InvariantError, SegreflowError
from .flow import (
    ConeParams,
    FlowResult,
    StopRule,
    cone_distance,
    energy_J,
    parity_for,
    rayleigh_multipliers,
    run_flow,
    sign_norms,
    system_residuals,
)
from .grid import Grid, build_grid
from .io import interface_mask, write_fields_csv, write_json, write_partition_csv, write_partition_pgm, write_rows_csv
from .kop import State
from .ladder import LadderReport, norm_ladder, run_ladder
from .linops import LinearOperator
from .nonlin import NonlinearitySpec
from .partition import Partition, extract_partition, interface_points, partition_energy, segregation_defect
from .seed import (
    BoundsReport,
    TrialPartition,
    default_layout,
    lower_bound,
    make_trial_partition,
    seed_from_partition,
    upper_bound_c_infty,
)
from .spectrum import EigResult, dirichlet_eigs

__all__ = ["Problem", "prepare", "solve", "ladder", "SolveOutcome", "ONE_SIGNED_TOL"]

log = logging.getLogger(__name__)

# a component whose smaller sign part is below this is reported one-signed
ONE_SIGNED_TOL = 1e-6


@dataclass
class Problem:
    config: RunConfig
    grid: Grid
    spec: NonlinearitySpec
    trial: TrialPartition
    omega_eigs: EigResult
    seed_state: State
    parity: np.ndarray | None
    rng_seed: int

    @property
    def stop(self) -> StopRule:
        f = self.config.flow
        return StopRule(f.residual_tol, f.max_steps, f.max_time)

    @property
    def cone(self) -> ConeParams:
        return ConeParams(self.config.cone_delta)

    @property
    def flow_kwargs(self) -> dict:
        f = self.config.flow
        return dict(dt0=f.dt0, dt_max=f.dt_max, k_tol=f.k_tol, cg_tol=f.cg_tol, cone_components=self.sign_changing)

    @property
    def sign_changing(self) -> list[int] | None:
        idx = [i for i, ki in enumerate(self.config.k) if ki >= 2]
        return idx or None

    def bounds(self, achieved: float | None = None) -> BoundsReport:
        return BoundsReport(
            lower=lower_bound(self.config.k, self.omega_eigs),
            upper=upper_bound_c_infty(self.trial, self.config.k),
            k=tuple(self.config.k),
            achieved=achieved,
        )


def prepare(cfg: RunConfig, beta: float | None = None) -> Problem:
    """Build every input of a run; randomness comes from one generator seeded by ``cfg.seed``."""
    grid = build_grid(cfg.domain.extents, cfg.domain.counts)
    nl = cfg.nonlinearity
    spec = NonlinearitySpec(cfg.m, cfg.a_vector, cfg.schedule[0] if beta is None else beta, nl.truncation, nl.p, nl.q)
    rng = np.random.default_rng(cfg.seed)
    eig_seed = int(rng.integers(2**31))
    kmax = max(cfg.k)
    symmetric = cfg.symmetry == "reflect" and any(ki == 2 for ki in cfg.k)
    rects = cfg.partition if cfg.partition is not None else default_layout(grid, cfg.m, symmetric)
    trial = make_trial_partition(grid, rects, kmax=kmax, seed=eig_seed)
    omega = dirichlet_eigs(LinearOperator(grid), max(1, kmax - 1), seed=eig_seed)
    u0 = seed_from_partition(trial, cfg.k, cfg.mix, experimental=cfg.experimental_k)
    if cfg.noise > 0:
        u0 = State(grid, u0.values + cfg.noise * _smooth_noise(grid, cfg.m, rng)).normalized()
    parity = parity_for(cfg.k, cfg.symmetry)
    return Problem(cfg, grid, spec, trial, omega, u0, parity, cfg.seed)


def _smooth_noise(grid: Grid, m: int, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    """Random combination of the lowest ``modes`` sine modes per axis, damped like ``1/|j|^2``."""
    out = np.zeros((m,) + grid.shape)
    idx = np.stack(np.meshgrid(*[np.arange(1, modes + 1)] * grid.dim, indexing="ij"), -1).reshape(-1, grid.dim)
    for i in range(m):
        for j in idx:
            phi = np.ones(grid.shape)
            for ax, jj in enumerate(j):
                phi = phi * np.sin(jj * np.pi * grid.coords[ax] / grid.extents[ax])
            out[i] += rng.standard_normal() * phi / float(np.sum(j**2))
    return out


@dataclass
class SolveOutcome:
    problem: Problem
    result: FlowResult
    partition: Partition | None
    summary: dict


def _component_signs(sn: np.ndarray) -> list[str]:
    out = []
    for pos, neg in sn:
        if neg <= ONE_SIGNED_TOL:
            out.append("positive")
        elif pos <= ONE_SIGNED_TOL:
            out.append("negative")
        else:
            out.append("sign-changing")
    return out


def _check_trace(result: FlowResult) -> None:
    j = result.trace.column("J")
    slack = 1e-9 + 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(j[:-1]))
    if np.any(np.diff(j) > slack):
        raise InvariantError("energy increased on an accepted step")
    if np.any(result.trace.column("norm_error") > 1e-12):
        raise InvariantError("component norms drifted off the unit sphere")
    t = result.trace.column("time")
    if np.any(np.diff(t) <= 0):
        raise InvariantError("trace times are not strictly increasing")


def state_summary(
    problem: Problem, u: State, spec: NonlinearitySpec, result: FlowResult | None
) -> tuple[dict, Partition | None]:
    cfg = problem.config
    sn = sign_norms(u)
    cd = cone_distance(u, problem.sign_changing)
    j = energy_J(u, spec)
    b = problem.bounds(j)
    part = None
    part_info: dict = {"error": None}
    try:
        part = extract_partition(u, cfg.support_tol, kmax=max(cfg.k))
        part_info.update(part.summary())
        part_info["energy"] = partition_energy(part, cfg.k)
        part_info["interface_fraction"] = float(np.mean(interface_mask(part)))
        if u.grid.dim == 1:
            part_info["interfaces"] = interface_points(part)
    except SegreflowError as exc:  # reported, never fatal for a summary
        part_info["error"] = str(exc)
    out = {
        "beta": spec.beta,
        "J": j,
        "multipliers": rayleigh_multipliers(u, spec),
        "certificate": system_residuals(u, spec),
        "cone_distance": {"distance": cd.distance, "component": cd.component, "sign": cd.sign},
        "in_cone_neighbourhood": cd.distance < cfg.cone_delta,
        "sign_norms": sn,
        "component_signs": _component_signs(sn),
        "segregation_defect": segregation_defect(u, spec.beta),
        "bounds": b.to_dict(),
        "partition": part_info,
        "norm_ladder": norm_ladder(u, 4),
        "max_norm": float(np.max(np.abs(u.values))),
    }
    if result is not None:
        res = result.trace.column("residual")
        out.update(
            {
                "status": result.status,
                "converged": result.status == "converged",
                "reason": result.reason,
                "steps": len(result.trace) - 1,
                "residual": float(res[-1]),
                "flow_time": float(result.trace.column("time")[-1]),
            }
        )
    return out, part


def _header(problem: Problem, command: str) -> dict:
    cfg = problem.config
    return {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "grid": {
            "extents": list(problem.grid.extents),
            "counts": list(problem.grid.counts),
            "spacing": list(problem.grid.spacing),
        },
        "k": list(cfg.k),
        "omega_eigenvalues": problem.omega_eigs.values,
        "trial_eigenvalues": [e.values for e in problem.trial.eigs],
        "symmetry": cfg.symmetry,
    }


def solve(cfg: RunConfig, out_dir: str | Path | None = None) -> SolveOutcome:
    """Single-beta run: seed, flow, certificate, summary; writes outputs when ``out_dir`` is given."""
    problem = prepare(cfg, beta=cfg.beta)
    result = run_flow(
        problem.seed_state, problem.spec, problem.cone, problem.stop, problem.parity, **problem.flow_kwargs
    )
    _check_trace(result)
    body, part = state_summary(problem, result.state, problem.spec, result)
    summary = _header(problem, "solve") | body
    if out_dir is not None:
        out = Path(out_dir)
        write_json(out / "summary.json", summary)
        with (out / "trace.csv").open("w", newline="") as fh:
            result.trace.to_csv(fh)
        write_fields_csv(out / "fields.csv", result.state)
        if part is not None:
            if problem.grid.dim == 2:
                write_partition_pgm(out / "partition.pgm", part)
            else:
                write_partition_csv(out / "partition.csv", part)
    return SolveOutcome(problem, result, part, summary)


def ladder(cfg: RunConfig, out_dir: str | Path | None = None, reference: float | None = None) -> tuple[LadderReport, dict]:
    """beta-continuation over ``cfg.schedule``; writes ``ladder.json`` and per-rung CSV."""
    problem = prepare(cfg)
    b = problem.bounds()
    report = run_ladder(
        problem.seed_state,
        problem.spec,
        cfg.k,
        cfg.schedule,
        stop=problem.stop,
        parity=problem.parity,
        cone=problem.cone,
        support_tol=cfg.support_tol,
        reference=reference,
        upper_bound=b.upper,
        lower_bound=b.lower,
        flow_kwargs=problem.flow_kwargs,
    )
    doc = _header(problem, "ladder") | {"ladder": report.to_dict()}
    if out_dir is not None:
        out = Path(out_dir)
        write_json(out / "ladder.json", doc)
        write_rows_csv(out / "ladder.csv", report.rows())
        if report.state is not None:
            write_fields_csv(out / "fields.csv", report.state)
    return report, doc
