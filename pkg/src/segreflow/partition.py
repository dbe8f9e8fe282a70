"""Partitions extracted from states, their spectral energies, and a 1D oracle."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegeneratePartitionError
from .grid import Grid, SubdomainMask
from .kop import State
from .linops import LinearOperator
from .spectrum import dirichlet_eigs

__all__ = [
    "Partition",
    "extract_partition",
    "partition_energy",
    "interface_points",
    "intervals_1d",
    "segregation_defect",
    "OracleResult",
    "oracle_1d",
]

log = logging.getLogger(__name__)

ORACLE_MAX_SEGMENTS = 16
ORACLE_BUDGET = 50_000_000


@dataclass(eq=False)
class Partition:
    """Disjoint masks with their lowest Dirichlet eigenvalues.

    ``labels`` holds the owning component per point and ``-1`` on points
    claimed by nobody.
    """

    grid: Grid
    labels: np.ndarray
    masks: tuple[SubdomainMask, ...]
    overlap: int
    uncovered_fraction: float
    eigenvalues: list[np.ndarray] = field(default_factory=list)
    eig_tol: float = 1e-6

    @property
    def m(self) -> int:
        return len(self.masks)

    def ensure_eigs(self, kmax: int) -> None:
        """Compute ``lambda_1..lambda_kmax`` of every mask not yet known."""
        if not self.eigenvalues:
            self.eigenvalues = [np.zeros(0) for _ in self.masks]
        for i, mk in enumerate(self.masks):
            if len(self.eigenvalues[i]) < kmax:
                k = min(kmax, mk.count)
                res = dirichlet_eigs(LinearOperator(self.grid, mask=mk), k, tol=self.eig_tol)
                vals = np.full(kmax, np.inf)
                vals[:k] = res.values
                self.eigenvalues[i] = vals

    @property
    def lam1(self) -> np.ndarray:
        self.ensure_eigs(1)
        return np.array([ev[0] for ev in self.eigenvalues])

    @property
    def lam2(self) -> np.ndarray:
        self.ensure_eigs(2)
        return np.array([ev[1] for ev in self.eigenvalues])

    def summary(self) -> dict:
        return {
            "overlap": self.overlap,
            "uncovered_fraction": self.uncovered_fraction,
            "measures": [mk.measure for mk in self.masks],
            "components": [mk.n_components() for mk in self.masks],
            "lambda_1": [float(x) for x in self.lam1],
            "lambda_2": [float(x) for x in self.lam2],
        }


def extract_partition(u: State, tol: float = 1e-3, kmax: int = 2) -> Partition:
    """Assign each point to the component with the largest ``|u_i|`` above its threshold.

    A point is a candidate for component ``i`` when
    ``|u_i| > tol * max|u_i|``. Ties go to the lowest index.

    Raises
    ------
    DegeneratePartitionError
        If some component owns no point.
    """
    if not 0 < tol < 1:
        raise ConfigError(f"support tolerance must lie in (0, 1), got {tol}", field="support_tol")
    a = np.abs(u.values)
    peaks = a.reshape(u.m, -1).max(axis=1)
    for i, pk in enumerate(peaks):
        if pk == 0:
            raise DegeneratePartitionError(f"component {i} is identically zero", component=i)
    above = a > (tol * peaks).reshape((-1,) + (1,) * u.grid.dim)
    claims = above.sum(axis=0)
    score = np.where(above, a, -np.inf)
    labels = np.where(claims > 0, np.argmax(score, axis=0), -1)
    masks = tuple(SubdomainMask(u.grid, labels == i) for i in range(u.m))
    for i, mk in enumerate(masks):
        if mk.count == 0:
            raise DegeneratePartitionError(f"component {i} owns no grid point", component=i)
    stacked = np.stack([mk.values for mk in masks])
    if np.any(stacked.sum(axis=0) > 1):  # by construction, but cheap to assert
        raise AssertionError("extracted masks overlap")
    p = Partition(
        grid=u.grid,
        labels=labels,
        masks=masks,
        overlap=int(np.sum(claims > 1)),
        uncovered_fraction=float(np.mean(claims == 0)),
    )
    p.ensure_eigs(kmax)
    return p


def partition_energy(p: Partition, k: Sequence[int]) -> float:
    """``sum_i lambda_{k_i}(omega_i)``."""
    if len(k) != p.m:
        raise ConfigError(f"k has {len(k)} entries for {p.m} subdomains", field="k")
    p.ensure_eigs(max(k))
    return float(sum(p.eigenvalues[i][ki - 1] for i, ki in enumerate(k)))


def intervals_1d(p: Partition) -> list[tuple[int, float, float]]:
    """Maximal runs of equal labels as ``(label, lo, hi)``; ``lo``/``hi`` are cell midpoints."""
    if p.grid.dim != 1:
        raise ConfigError("interval lists are only defined in 1D", field="domain")
    h = p.grid.spacing[0]
    x = p.grid.axis(0)
    lab = p.labels
    out = []
    start = 0
    for s in range(1, len(lab) + 1):
        if s == len(lab) or lab[s] != lab[start]:
            lo = 0.0 if start == 0 else x[start] - h / 2
            hi = p.grid.extents[0] if s == len(lab) else x[s - 1] + h / 2
            out.append((int(lab[start]), float(lo), float(hi)))
            start = s
    return out


def interface_points(p: Partition) -> list[float]:
    """Positions separating runs owned by different components (1D).

    Adjacent runs meet at a cell face; an unowned band between two runs
    counts once, at its centre.
    """
    runs = intervals_1d(p)
    pts = []
    for idx in range(1, len(runs)):
        prev, cur = runs[idx - 1], runs[idx]
        if prev[0] < 0:
            continue
        if cur[0] >= 0 and cur[0] != prev[0]:
            pts.append(prev[2])
        elif cur[0] < 0 and idx + 1 < len(runs) and runs[idx + 1][0] not in (-1, prev[0]):
            pts.append(0.5 * (cur[1] + cur[2]))
    return pts


def segregation_defect(u: State, beta: float) -> float:
    """``max_{i<j} beta int u_i^2 u_j^2``."""
    sq = u.values.reshape(u.m, -1) ** 2
    best = 0.0
    for i in range(u.m):
        for j in range(i + 1, u.m):
            best = max(best, beta * u.grid.cell_volume * float(np.dot(sq[i], sq[j])))
    return best


@dataclass(frozen=True)
class OracleResult:
    value: float
    layouts: tuple[str, ...]  # one label digit per segment
    evaluated: int

    def intervals(self, layout: str) -> list[tuple[int, float, float]]:
        n = len(layout)
        out = []
        for lab, grp in itertools.groupby(enumerate(layout), key=lambda t: t[1]):
            grp = list(grp)
            out.append((int(lab), grp[0][0] / n, (grp[-1][0] + 1) / n))
        return out


def _run_lengths_topk(ind: np.ndarray, topk: int) -> np.ndarray:
    """Largest ``topk`` run lengths of True per row, descending, zero-padded."""
    rows, s = ind.shape
    run = np.zeros((rows, s), dtype=np.int16)
    cur = np.zeros(rows, dtype=np.int16)
    for c in range(s):
        cur = np.where(ind[:, c], cur + 1, 0).astype(np.int16)
        run[:, c] = cur
    ends = ind.copy()
    ends[:, :-1] &= ~ind[:, 1:]
    lengths = np.where(ends, run, 0)
    part = -np.sort(-lengths, axis=1)
    return part[:, :topk]


def _kth_union_eig(lengths: np.ndarray, k: int, segments: int) -> np.ndarray:
    """``lambda_k`` of a union of intervals (lengths in segments), in units of pi^2."""
    rows, topk = lengths.shape
    with np.errstate(divide="ignore"):
        inv = np.where(lengths > 0, (segments / np.maximum(lengths, 1)) ** 2, np.inf)
    j2 = (np.arange(1, k + 1) ** 2).astype(float)
    cand = (inv[:, :, None] * j2[None, None, :]).reshape(rows, -1)
    return np.sort(cand, axis=1)[:, k - 1]


def oracle_1d(
    m: int,
    k: Sequence[int],
    segments: int,
    budget: int = ORACLE_BUDGET,
    chunk: int = 1 << 17,
) -> OracleResult:
    """Minimum of ``sum lambda_{k_i}(omega_i)`` over labelings of equal segments of (0, 1).

    Every assignment of the ``segments`` cells to ``m`` labels is scored
    with the exact spectrum of a union of intervals,
    ``lambda_j((a, a + l)) = j^2 pi^2 / l^2``. When all ``k_i`` coincide
    the first segment is pinned to label 0 (label permutations are
    symmetries). All layouts tying the minimum are reported.
    """
    k = tuple(int(x) for x in k)
    if m < 1 or len(k) != m or any(x < 1 for x in k):
        raise ConfigError("need m >= 1 and one k_i >= 1 per label", field="k")
    if not 1 <= segments <= ORACLE_MAX_SEGMENTS:
        raise ConfigError(f"segments must lie in [1, {ORACLE_MAX_SEGMENTS}], got {segments}", field="segments")
    pinned = len(set(k)) == 1 and m > 1
    free = segments - 1 if pinned else segments
    total = m**free
    if total > budget:
        raise ConfigError(f"oracle needs {total} evaluations, budget is {budget}", field="segments")
    kmax = max(k)
    best = math.inf
    best_codes: list[np.ndarray] = []
    powers = m ** np.arange(free - 1, -1, -1, dtype=np.int64)
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(lo + chunk, total), dtype=np.int64)
        digits = (codes[:, None] // powers[None, :]) % m if free else np.zeros((len(codes), 0), dtype=np.int64)
        if pinned:
            digits = np.hstack([np.zeros((len(codes), 1), dtype=np.int64), digits])
        score = np.zeros(len(codes))
        for lab in range(m):
            lengths = _run_lengths_topk(digits == lab, kmax)
            score += _kth_union_eig(lengths, k[lab], segments)
        cmin = float(score.min())
        if not np.isfinite(cmin):
            continue
        tol = 1e-12 * cmin
        if cmin < best - tol:
            best = cmin
            best_codes = [digits[score <= cmin + tol]]
        elif cmin <= best + tol:
            best_codes.append(digits[score <= best + tol])
    if not np.isfinite(best):
        raise ConfigError("no labeling gives every label a nonempty set", field="segments")
    layouts = sorted({"".join(str(int(d)) for d in row) for arr in best_codes for row in arr})
    return OracleResult(value=best * math.pi**2, layouts=tuple(layouts), evaluated=total)
