"""Dirichlet stencil operators ``-Delta_h + diag(V)`` and a Jacobi-PCG solver.

A mask restricts the operator to a subdomain: masked-out rows and columns
are replaced by the identity and right-hand sides are zeroed there, so the
same code path serves the whole domain and every subdomain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ConvergenceError, GridMismatchError
from .grid import Field, Grid, SubdomainMask

__all__ = [
    "LinearOperator",
    "CGResult",
    "laplacian_matrix",
    "apply",
    "cg_solve",
    "pcg",
    "h1_inner",
]

log = logging.getLogger(__name__)


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Matrix of ``-Delta_h`` (3-point / 5-point stencil) on interior points."""
    mats = []
    for n, h in zip(grid.counts, grid.spacing):
        e = np.ones(n)
        mats.append(sp.diags([-e[1:], 2 * e, -e[1:]], [-1, 0, 1], format="csr") / h**2)
    if grid.dim == 1:
        return mats[0].tocsr()
    ix = sp.identity(grid.counts[0], format="csr")
    iy = sp.identity(grid.counts[1], format="csr")
    return (sp.kron(mats[0], iy) + sp.kron(ix, mats[1])).tocsr()


_LAPLACIANS: dict[Grid, sp.csr_matrix] = {}


def _cached_laplacian(grid: Grid) -> sp.csr_matrix:
    if grid not in _LAPLACIANS:
        _LAPLACIANS[grid] = laplacian_matrix(grid)
    return _LAPLACIANS[grid]


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """``A = -Delta_h + diag(V)`` on ``grid``, optionally restricted to ``mask``.

    ``potential`` and ``mask`` are plain arrays of the grid shape (or
    ``Field`` / ``SubdomainMask`` instances).
    """

    grid: Grid
    potential: np.ndarray | None = None
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.potential is not None:
            v = np.asarray(getattr(self.potential, "values", self.potential), dtype=float)
            if v.shape != self.grid.shape:
                raise GridMismatchError("potential shape does not match grid")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ConfigError("potential must be finite and nonnegative", field="potential")
            object.__setattr__(self, "potential", v)
        if self.mask is not None:
            m = getattr(self.mask, "values", self.mask)
            m = np.asarray(m, dtype=bool)
            if m.shape != self.grid.shape:
                raise GridMismatchError("mask shape does not match grid")
            object.__setattr__(self, "mask", m)

    @cached_property
    def flat_mask(self) -> np.ndarray | None:
        return None if self.mask is None else self.mask.ravel()

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        a = _cached_laplacian(self.grid)
        if self.potential is not None:
            a = (a + sp.diags(self.potential.ravel())).tocsr()
        if self.mask is not None:
            keep = self.flat_mask.astype(float)
            d = sp.diags(keep)
            a = (d @ a @ d + sp.diags(1.0 - keep)).tocsr()
        return a

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def restrict(self, x: np.ndarray) -> np.ndarray:
        """Zero ``x`` outside the mask (flat arrays)."""
        if self.flat_mask is None:
            return x
        return np.where(self.flat_mask, x, 0.0)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """``P A P x`` on flat arrays; zero outside the mask."""
        if self.flat_mask is None:
            return self.matrix @ x
        return self.restrict(self.matrix @ self.restrict(x))

    def with_potential(self, potential: np.ndarray) -> "LinearOperator":
        return LinearOperator(self.grid, potential, self.mask)


def apply(op: LinearOperator, u: Field) -> Field:
    """Apply ``op`` to ``u``; values of ``u`` outside the mask are ignored."""
    if u.grid != op.grid:
        raise GridMismatchError("operator and field live on different grids")
    return Field(op.grid, op.matvec(u.values.ravel()).reshape(op.grid.shape))


def h1_inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """Discrete ``int grad a . grad b`` = ``h^N <(-Delta_h) a, b>`` on raw arrays."""
    lap = _cached_laplacian(grid)
    return grid.cell_volume * float(np.dot(lap @ a.ravel(), b.ravel()))


@dataclass(frozen=True)
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # relative, ||A x - b|| / ||b||


def pcg(
    op: LinearOperator,
    b: np.ndarray,
    rel_tol: float = 1e-10,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
    strict: bool = True,
) -> CGResult:
    """Jacobi-preconditioned CG on flat arrays.

    Convergence is judged on the true residual ``||A x - b||_2``; the
    recursive residual is refreshed whenever it claims convergence early.
    If a refresh fails to halve the true residual the iteration has hit its
    round-off floor: ``strict`` solves raise, otherwise the current iterate
    is returned with its (honest) residual. Exhausting ``max_iter`` always
    raises.
    """
    if not 0 < rel_tol < 1:
        raise ConfigError(f"rel_tol must lie in (0, 1), got {rel_tol}", field="cg_tol")
    n = b.size
    if max_iter is None:
        max_iter = max(10 * n, 1000)
    b = op.restrict(np.asarray(b, dtype=float).ravel())
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    a = op.matrix
    dinv = 1.0 / op.diagonal
    x = np.zeros(n) if x0 is None else op.restrict(np.array(x0, dtype=float).ravel())
    target = rel_tol * bnorm
    it = 0
    previous = np.inf
    while True:
        r = b - a @ x
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            return CGResult(x, it, rnorm / bnorm)
        stagnated = rnorm > 0.5 * previous
        if stagnated and not strict:
            return CGResult(x, it, rnorm / bnorm)
        if it >= max_iter or stagnated:
            raise ConvergenceError(
                f"CG stopped after {it} iterations at relative residual {rnorm / bnorm:.3e}"
                f" (target {rel_tol:.1e})",
                residual=rnorm / bnorm,
                iterations=it,
            )
        previous = rnorm
        z = dinv * r
        p = z.copy()
        rz = float(np.dot(r, z))
        while it < max_iter:
            it += 1
            ap = a @ p
            alpha = rz / float(np.dot(p, ap))
            x += alpha * p
            r -= alpha * ap
            if float(np.linalg.norm(r)) <= target:
                break
            z = dinv * r
            rz_new = float(np.dot(r, z))
            p *= rz_new / rz
            p += z
            rz = rz_new


def cg_solve(
    op: LinearOperator,
    rhs: Field,
    rel_tol: float = 1e-10,
    max_iter: int | None = None,
    x0: Field | None = None,
) -> Field:
    """Solve ``op x = rhs`` with ``||op x - rhs||_2 <= rel_tol ||rhs||_2``."""
    if rhs.grid != op.grid:
        raise GridMismatchError("operator and right-hand side live on different grids")
    res = pcg(op, rhs.values, rel_tol, max_iter, None if x0 is None else x0.values)
    log.debug("cg: %d iterations, residual %.2e", res.iterations, res.residual)
    return Field(op.grid, res.x.reshape(op.grid.shape))
