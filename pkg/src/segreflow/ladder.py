"""beta-continuation with warm starts, and the Lebesgue norm-ladder diagnostic."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, SegreflowError
from .flow import (
    ConeParams,
    StopRule,
    energy_J,
    rayleigh_multipliers,
    run_flow,
    sign_norms,
    system_residuals,
)
from .kop import State
from .nonlin import NonlinearitySpec
from .partition import extract_partition, interface_points, partition_energy, segregation_defect

__all__ = [
    "ladder_exponents",
    "norm_ladder",
    "Rung",
    "LadderReport",
    "run_ladder",
]

log = logging.getLogger(__name__)

MAX_NORM_LEVELS = 8


def ladder_exponents(levels: int, surrogate_exponent: float = 6.0) -> np.ndarray:
    """Exponents ``2 + delta(k)`` with ``delta(1) = 0`` and
    ``2 + delta(k+1) = s (2 + delta(k)) / 2``.

    >>> ladder_exponents(4) - 2
    array([ 0.,  4., 16., 52.])
    """
    if not 1 <= levels <= MAX_NORM_LEVELS:
        raise ConfigError(f"levels must lie in [1, {MAX_NORM_LEVELS}], got {levels}", field="levels")
    if not surrogate_exponent > 2:
        raise ConfigError("surrogate exponent must exceed 2", field="surrogate_exponent")
    out = [2.0]
    for _ in range(levels - 1):
        out.append(surrogate_exponent * out[-1] / 2)
    return np.array(out)


def norm_ladder(u: State, levels: int, surrogate_exponent: float = 6.0) -> np.ndarray:
    """Discrete ``L^{2 + delta(k)}`` norms, shape ``(levels, m)``.

    Computed as ``max|u| (h^N sum (|u|/max|u|)^r)^(1/r)`` so that the
    high exponents never overflow.
    """
    exps = ladder_exponents(levels, surrogate_exponent)
    w = u.grid.cell_volume
    out = np.zeros((levels, u.m))
    for i in range(u.m):
        a = np.abs(u.values[i]).ravel()
        top = float(a.max())
        if top == 0:
            continue
        scaled = a / top
        for lv, r in enumerate(exps):
            out[lv, i] = top * (w * float(np.sum(scaled**r))) ** (1.0 / r)
    return out


@dataclass
class Rung:
    beta: float
    status: str
    steps: int
    J: float
    multipliers: list[float]
    residual: float | None
    certificate: list[float]
    defect: float
    partition_energy: float | None
    uncovered_fraction: float | None
    overlap: int | None
    interfaces: list[float] | None
    max_norm: float
    norm_ladder: list[list[float]]
    cauchy_l2: float | None
    sign_norms: list[list[float]] = field(default_factory=list)
    error: str | None = None


@dataclass
class LadderReport:
    k: list[int]
    schedule: list[float]
    rungs: list[Rung]
    reference: float | None = None
    upper_bound: float | None = None
    lower_bound: float | None = None
    plateau_beta: float | None = None
    plateau_tol: float = 1e-3
    state: State | None = None  # last state reached; not serialised

    @property
    def final(self) -> Rung:
        return self.rungs[-1]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rungs]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "schedule": self.schedule,
            "reference": self.reference,
            "upper_bound": self.upper_bound,
            "lower_bound": self.lower_bound,
            "plateau_beta": self.plateau_beta,
            "plateau_tol": self.plateau_tol,
            "rungs": [asdict(r) for r in self.rungs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def rows(self) -> list[dict]:
        """Flat per-rung records (CSV friendly)."""
        out = []
        for r in self.rungs:
            row = {
                "beta": r.beta,
                "status": r.status,
                "steps": r.steps,
                "J": r.J,
                "residual": r.residual,
                "defect": r.defect,
                "partition_energy": r.partition_energy,
                "uncovered_fraction": r.uncovered_fraction,
                "max_norm": r.max_norm,
                "cauchy_l2": r.cauchy_l2,
            }
            for i, lam in enumerate(r.multipliers):
                row[f"lambda_{i}"] = lam
            out.append(row)
        return out


def run_ladder(
    u0: State,
    spec: NonlinearitySpec,
    k: Sequence[int],
    schedule: Sequence[float],
    stop: StopRule | None = None,
    parity: np.ndarray | None = None,
    cone: ConeParams | None = None,
    support_tol: float = 1e-3,
    reference: float | None = None,
    upper_bound: float | None = None,
    lower_bound: float | None = None,
    plateau_tol: float = 1e-3,
    norm_levels: int = 4,
    flow_kwargs: dict | None = None,
) -> LadderReport:
    """Solve at each ``beta`` of ``schedule``, warm-starting from the previous rung.

    A rung whose flow fails or exhausts its budget is recorded with its
    status and the ladder moves on from the last state reached.
    ``plateau_beta`` is the first ``beta`` at which the partition energy
    changed by less than ``plateau_tol`` relative to the previous rung.
    """
    schedule = [float(b) for b in schedule]
    if not schedule or any(b <= 0 for b in schedule):
        raise ConfigError("beta schedule must be nonempty and positive", field="betas")
    if any(b2 <= b1 for b1, b2 in zip(schedule, schedule[1:])):
        raise ConfigError("beta schedule must be strictly increasing", field="betas")
    k = [int(x) for x in k]
    stop = stop or StopRule()
    flow_kwargs = dict(flow_kwargs or {})
    report = LadderReport(
        k=k,
        schedule=schedule,
        rungs=[],
        reference=reference,
        upper_bound=upper_bound,
        lower_bound=lower_bound,
        plateau_tol=plateau_tol,
    )
    u = u0
    prev_state: State | None = None
    prev_energy: float | None = None
    for beta in schedule:
        sp = spec.with_beta(beta)
        error = None
        try:
            res = run_flow(u, sp, cone=cone, stop=stop, parity=parity, **flow_kwargs)
            u, status, steps = res.state, res.status, len(res.trace) - 1
            residual = float(res.trace.column("residual")[-1])
        except SegreflowError as exc:
            log.warning("rung beta=%g failed: %s", beta, exc)
            status, steps, residual, error = "failed", 0, None, str(exc)
        energy = interfaces = unc = overlap = None
        try:
            part = extract_partition(u, support_tol, kmax=max(k))
            energy = partition_energy(part, k)
            unc, overlap = part.uncovered_fraction, part.overlap
            if u.grid.dim == 1:
                interfaces = interface_points(part)
        except SegreflowError as exc:
            log.warning("partition extraction at beta=%g failed: %s", beta, exc)
        cauchy = None
        if prev_state is not None:
            cauchy = float(np.sqrt(u.grid.cell_volume * np.sum((u.values - prev_state.values) ** 2)))
        rung = Rung(
            beta=beta,
            status=status,
            steps=steps,
            J=energy_J(u, sp),
            multipliers=[float(x) for x in rayleigh_multipliers(u, sp)],
            residual=residual,
            certificate=[float(x) for x in system_residuals(u, sp)],
            defect=segregation_defect(u, beta),
            partition_energy=energy,
            uncovered_fraction=unc,
            overlap=overlap,
            interfaces=interfaces,
            max_norm=float(np.max(np.abs(u.values))),
            norm_ladder=norm_ladder(u, norm_levels).tolist(),
            cauchy_l2=cauchy,
            sign_norms=sign_norms(u).tolist(),
            error=error,
        )
        report.rungs.append(rung)
        log.info(
            "beta=%g %s steps=%d J=%.8g energy=%s defect=%.4g", beta, status, steps, rung.J, energy, rung.defect
        )
        if (
            report.plateau_beta is None
            and energy is not None
            and prev_energy is not None
            and abs(energy - prev_energy) <= plateau_tol * abs(prev_energy)
        ):
            report.plateau_beta = beta
        prev_state, prev_energy = u, energy
    report.state = u
    return report
