"""Lowest Dirichlet eigenpairs by inverse subspace iteration.

Each sweep solves ``A Y = X`` column by column with CG, Gram-Schmidt
orthonormalises ``Y`` on the masked points and applies a Rayleigh-Ritz
step. A couple of guard vectors beyond the requested ``k`` keep
convergence fast when ``lambda_k`` is close to ``lambda_{k+1}`` and make
exactly degenerate pairs (square, disjoint masks) come out with their
full multiplicity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, EmptySupportError, GridMismatchError
from .grid import Field, Grid
from .linops import LinearOperator, pcg

__all__ = ["EigResult", "dirichlet_eigs", "rayleigh"]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigResult:
    """Eigenvalues in ascending order with L2-normalised eigenfields."""

    grid: Grid
    values: np.ndarray  # (k,)
    vectors: np.ndarray  # (k, *grid.shape)
    residuals: np.ndarray  # (k,), ||A phi - lambda phi||_2
    iterations: int = 0

    def __len__(self) -> int:
        return len(self.values)

    def field(self, j: int) -> Field:
        """The ``j``-th eigenfield, zero-based."""
        return Field(self.grid, self.vectors[j])


def _orthonormalize(y: np.ndarray) -> np.ndarray:
    # two passes of modified Gram-Schmidt via QR; columns are vectors
    q, _ = np.linalg.qr(y)
    q, _ = np.linalg.qr(q)
    return q


def dirichlet_eigs(
    op: LinearOperator,
    k: int,
    tol: float = 1e-6,
    max_iter: int = 500,
    guard: int = 2,
    cg_tol: float = 1e-10,
    seed: int = 0,
) -> EigResult:
    """Lowest ``k`` eigenpairs of ``op`` on its mask, counted with multiplicity.

    Parameters
    ----------
    op : LinearOperator
        SPD operator, possibly masked. Eigenfields vanish outside the mask.
    k : int
        Number of eigenpairs.
    tol : float
        Absolute bound on each residual ``||A phi - lambda phi||_2`` (discrete
        L2 norm, ``||phi||_2 = 1``).
    guard : int
        Extra iteration vectors beyond ``k``.
    seed : int
        Seed of the random starting block.

    Raises
    ------
    EmptySupportError
        If the mask is empty or has fewer points than ``k``.
    ConvergenceError
        If ``max_iter`` sweeps do not reach ``tol``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    grid = op.grid
    npts = grid.size if op.flat_mask is None else int(op.flat_mask.sum())
    if npts == 0:
        raise EmptySupportError("eigenproblem on an empty mask")
    if npts < k:
        raise EmptySupportError(f"mask has {npts} points, fewer than k={k}")
    p = min(k + guard, npts)
    w = grid.cell_volume
    rng = np.random.default_rng(seed)

    if op.flat_mask is None:
        idx = None
    else:
        idx = np.flatnonzero(op.flat_mask)

    def embed(cols: np.ndarray) -> np.ndarray:
        if idx is None:
            return cols
        full = np.zeros((grid.size, cols.shape[1]))
        full[idx] = cols
        return full

    def compress(full: np.ndarray) -> np.ndarray:
        return full if idx is None else full[idx]

    x = _orthonormalize(rng.standard_normal((npts, p)))
    theta = np.ones(p)
    resid = np.full(k, np.inf)
    for it in range(1, max_iter + 1):
        xf = embed(x)
        yf = np.empty_like(xf)
        for j in range(p):
            # x_j / theta_j is the exact solution once x_j is an eigenvector
            guess = xf[:, j] / theta[j] if it > 1 else None
            yf[:, j] = pcg(op, xf[:, j], cg_tol, x0=guess, strict=False).x
        y = _orthonormalize(compress(yf))
        ay = compress(np.column_stack([op.matvec(c) for c in embed(y).T]))
        h = y.T @ ay
        theta, s = np.linalg.eigh(0.5 * (h + h.T))
        x = y @ s
        ax = ay @ s
        # discrete L2: phi = x / sqrt(w), ||A phi - theta phi||_2 = ||A x - theta x||
        resid = np.linalg.norm(ax[:, :k] - x[:, :k] * theta[:k], axis=0)
        log.debug("eigs sweep %d: theta=%s resid=%s", it, theta[:k], resid)
        if np.all(resid <= tol):
            break
    else:
        raise ConvergenceError(
            f"eigensolver did not converge in {max_iter} sweeps (max residual {resid.max():.3e})",
            residual=float(resid.max()),
            iterations=max_iter,
        )
    vecs = embed(x[:, :k]).T / np.sqrt(w)
    # fix the sign so the largest-magnitude entry is positive (reproducible output)
    for j in range(k):
        if vecs[j, np.argmax(np.abs(vecs[j]))] < 0:
            vecs[j] *= -1
    return EigResult(
        grid=grid,
        values=theta[:k].copy(),
        vectors=vecs.reshape((k,) + grid.shape),
        residuals=resid.copy(),
        iterations=it,
    )


def rayleigh(op: LinearOperator, u: Field) -> float:
    """``<A u, u> / <u, u>`` with the discrete L2 inner product."""
    if u.grid != op.grid:
        raise GridMismatchError("operator and field live on different grids")
    x = op.restrict(u.values.ravel())
    den = float(np.dot(x, x))
    if den == 0:
        raise EmptySupportError("Rayleigh quotient of the zero field")
    return float(np.dot(op.matvec(x), x)) / den
