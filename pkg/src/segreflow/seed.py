"""Trial partitions, seed states and the energy sandwich.

A seed component lives in the span of the first ``k_i`` Dirichlet
eigenfunctions of its trial subdomain ``omega_i``. Seeds of disjoint
subdomains have zero coupling energy, so ``J(seed) <= sum lambda_{k_i}(omega_i)``,
the upper bound for the limiting minimax level. The lower bound is
``sum lambda_{k_i - 1}(Omega)`` with ``lambda_0 := 0``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, ConvergenceError, EmptySupportError
from .grid import Grid, SubdomainMask, rectangle_mask
from .kop import State
from .linops import LinearOperator
from .spectrum import EigResult, dirichlet_eigs

__all__ = [
    "TrialPartition",
    "BoundsReport",
    "make_trial_partition",
    "default_layout",
    "default_trial_partition",
    "balance_angle",
    "seed_from_partition",
    "upper_bound_c_infty",
    "lower_bound",
]

log = logging.getLogger(__name__)

BALANCE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class TrialPartition:
    """Pairwise disjoint subdomains with their lowest eigenpairs."""

    masks: tuple[SubdomainMask, ...]
    eigs: tuple[EigResult, ...]

    def __post_init__(self):
        if len(self.masks) != len(self.eigs):
            raise ConfigError("one eigen-result per mask is required", field="partition")
        for i, mk in enumerate(self.masks):
            if mk.count == 0:
                raise EmptySupportError(f"trial subdomain {i} is empty")
            for j in range(i):
                if np.any(mk.values & self.masks[j].values):
                    raise ConfigError(f"trial subdomains {j} and {i} overlap", field="partition")

    @property
    def m(self) -> int:
        return len(self.masks)

    @property
    def grid(self) -> Grid:
        return self.masks[0].grid

    def eigenvalue(self, i: int, k: int) -> float:
        """``lambda_k(omega_i)``, one-based ``k``."""
        return float(self.eigs[i].values[k - 1])


def _check_k(k: Sequence[int], m: int, experimental: bool = False) -> tuple[int, ...]:
    k = tuple(int(x) for x in k)
    if len(k) != m:
        raise ConfigError(f"k has {len(k)} entries for m={m} components", field="k")
    for x in k:
        if x < 1:
            raise ConfigError(f"k entries must be >= 1, got {x}", field="k")
        if x > 2 and not experimental:
            raise ConfigError(f"k entries above 2 need experimental_k, got {x}", field="k")
    return k


def make_trial_partition(
    grid: Grid,
    rects: Sequence[Sequence[Sequence[Sequence[float]]]],
    kmax: int = 2,
    eig_tol: float = 1e-6,
    seed: int = 0,
) -> TrialPartition:
    """Build a trial partition from one list of boxes per component."""
    masks = tuple(rectangle_mask(grid, r) for r in rects)
    for i, mk in enumerate(masks):
        if mk.count < kmax:
            raise EmptySupportError(f"trial subdomain {i} has {mk.count} points, fewer than k={kmax}")
    eigs = tuple(dirichlet_eigs(LinearOperator(grid, mask=mk), kmax, tol=eig_tol, seed=seed) for mk in masks)
    return TrialPartition(masks, eigs)


def default_layout(grid: Grid, m: int, symmetric: bool = False) -> list[list[list[list[float]]]]:
    """Equal strips along axis 0, as rectangle lists.

    With ``symmetric`` the axis is cut into ``2m`` strips and component
    ``i`` takes the mirror pair ``(i, 2m-1-i)``, so every subdomain is
    invariant under reflection of axis 0 (for ``m = 2``: outer quarters
    and the middle half).
    """
    length = grid.extents[0]
    rest = [[0.0, e] for e in grid.extents[1:]]
    if not symmetric:
        w = length / m
        return [[[[i * w, (i + 1) * w]] + rest] for i in range(m)]
    w = length / (2 * m)
    layout = []
    for i in range(m):
        j = 2 * m - 1 - i
        if j == i + 1:
            layout.append([[[i * w, (j + 1) * w]] + rest])
        else:
            layout.append([[[i * w, (i + 1) * w]] + rest, [[j * w, (j + 1) * w]] + rest])
    return layout


def default_trial_partition(grid: Grid, m: int, k: Sequence[int], symmetric: bool = False, seed: int = 0) -> TrialPartition:
    kmax = max(k)
    return make_trial_partition(grid, default_layout(grid, m, symmetric), kmax=kmax, seed=seed)


def _pos_mass(v: np.ndarray, w: float) -> float:
    return w * float(np.sum(np.maximum(v, 0.0) ** 2))


def balance_angle(phi1: np.ndarray, phi2: np.ndarray, cell_volume: float, start: float = 0.0) -> float:
    """Angle ``t`` with ``||(cos t phi1 + sin t phi2)^+||^2 = 1/2``.

    With ``h(t) = ||v(t)^+||^2 - 1/2`` we have ``h(t + pi) = -h(t)``, so a
    sign change is bracketed by ``[start, start + pi]``.
    """

    def h(t):
        return _pos_mass(math.cos(t) * phi1 + math.sin(t) * phi2, cell_volume) - 0.5

    a, b = start, start + math.pi
    ha = h(a)
    if abs(ha) <= 1e-12:
        return a
    return brentq(h, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


def seed_from_partition(
    tp: TrialPartition,
    k: Sequence[int],
    mix: Sequence[float] | None = None,
    experimental: bool = False,
) -> State:
    """Unit-norm seed with component ``i`` in ``span{phi_1, .., phi_{k_i}}`` of ``omega_i``.

    ``k_i = 1`` uses ``phi_1``; ``k_i = 2`` uses the sign-balanced
    combination found from the starting angle ``mix[i]``; ``k_i > 2``
    (experimental) uses ``phi_{k_i}``.

    Raises
    ------
    ConvergenceError
        If the balancing root cannot be found; ``component`` names it.
    """
    k = _check_k(k, tp.m, experimental)
    mix = [0.0] * tp.m if mix is None else list(mix)
    if len(mix) != tp.m:
        raise ConfigError("mix needs one angle per component", field="mix")
    grid = tp.grid
    w = grid.cell_volume
    comps = []
    for i, ki in enumerate(k):
        if len(tp.eigs[i]) < ki:
            raise ConfigError(f"trial partition has {len(tp.eigs[i])} eigenpairs for component {i}, need {ki}", field="k")
        vecs = tp.eigs[i].vectors
        if ki == 1:
            v = vecs[0]
        elif ki == 2:
            try:
                t = balance_angle(vecs[0], vecs[1], w, mix[i])
            except (ValueError, RuntimeError) as exc:
                raise ConvergenceError(f"sign balancing failed on component {i}: {exc}", component=i) from exc
            v = math.cos(t) * vecs[0] + math.sin(t) * vecs[1]
            err = abs(_pos_mass(v / math.sqrt(w * float(np.sum(v * v))), w) - 0.5)
            if err > BALANCE_TOL:
                raise ConvergenceError(
                    f"sign balancing on component {i} missed by {err:.2e}", residual=err, component=i
                )
        else:
            v = vecs[ki - 1]
        comps.append(v)
    return State(grid, np.stack(comps)).normalized()


def upper_bound_c_infty(tp: TrialPartition, k: Sequence[int]) -> float:
    """``sum_i lambda_{k_i}(omega_i)``."""
    k = _check_k(k, tp.m, experimental=True)
    return float(sum(tp.eigenvalue(i, ki) for i, ki in enumerate(k)))


def lower_bound(k: Sequence[int], omega_eigs: EigResult) -> float:
    """``sum_i lambda_{k_i - 1}(Omega)`` with ``lambda_0 := 0``."""
    total = 0.0
    for ki in k:
        if ki < 1:
            raise ConfigError(f"k entries must be >= 1, got {ki}", field="k")
        if ki >= 2:
            if len(omega_eigs) < ki - 1:
                raise ConfigError(f"need lambda_{ki - 1}(Omega), only {len(omega_eigs)} computed", field="k")
            total += float(omega_eigs.values[ki - 2])
    return total


@dataclass
class BoundsReport:
    """``lower <= achieved <= upper`` with the slack used for the check."""

    lower: float
    upper: float
    k: tuple[int, ...]
    achieved: float | None = None
    rel_slack: float = 1e-6
    notes: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool | None:
        if self.achieved is None:
            return None
        slack = self.rel_slack * max(1.0, abs(self.upper))
        return self.lower - slack <= self.achieved <= self.upper + slack

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "k": list(self.k),
            "achieved": self.achieved,
            "holds": self.holds,
            # J is only evaluated at seeds and converged states, never maximised over a class
            "one_sided": True,
        }
