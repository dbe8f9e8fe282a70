"""The auxiliary operator ``K`` and the pseudogradient ``V = u - K(u)``.

For a state ``u`` and each component ``i``, ``w_i = K(u)_i`` solves

    -Delta w + a_i g(w) + f(w) S_i = mu_i u_i,    <u_i, w> = 1,

with ``S_i = sum_{j != i} F(u_j)`` frozen. It is the minimiser of the
strictly convex functional

    Phi(w) = 1/2 int |grad w|^2 + a_i int G(w) + int S_i F(w)

on the affine hyperplane ``<u_i, w> = 1``, and ``mu_i`` is the Lagrange
multiplier.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, ConvergenceError, EmptySupportError, GridMismatchError
from .grid import Field, Grid
from .linops import LinearOperator, _cached_laplacian, pcg
from .nonlin import NonlinearitySpec

__all__ = ["State", "KSolveResult", "solve_K", "pseudogradient", "coupling_potential"]

log = logging.getLogger(__name__)

# states with a component norm at or below this lie outside M*
MSTAR_NORM = 0.5


@dataclass(frozen=True, eq=False)
class State:
    """``m`` grid functions stacked as ``values[i]``."""

    grid: Grid
    values: np.ndarray  # (m, *grid.shape)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == self.grid.dim:
            v = v[None]
        if v.shape[1:] != self.grid.shape:
            raise GridMismatchError(f"state of shape {v.shape} on grid of shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("state contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_fields(cls, fields: Sequence[Field]) -> "State":
        grids = {f.grid for f in fields}
        if len(grids) != 1:
            raise GridMismatchError("fields live on different grids")
        return cls(fields[0].grid, np.stack([f.values for f in fields]))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def component(self, i: int) -> Field:
        return Field(self.grid, self.values[i])

    @property
    def norms(self) -> np.ndarray:
        w = self.grid.cell_volume
        flat = self.values.reshape(self.m, -1)
        return np.sqrt(w * np.einsum("ij,ij->i", flat, flat))

    def in_mstar(self) -> bool:
        return bool(np.all(self.norms > MSTAR_NORM))

    def normalized(self) -> "State":
        n = self.norms
        if np.any(n == 0):
            raise EmptySupportError("cannot normalize a state with a zero component")
        return State(self.grid, self.values / n.reshape((-1,) + (1,) * self.grid.dim))

    def on_manifold(self, tol: float = 1e-10) -> bool:
        return bool(np.all(np.abs(self.norms - 1.0) <= tol))


@dataclass(frozen=True, eq=False)
class KSolveResult:
    """Solutions ``w_i``, multipliers ``mu_i`` and solver diagnostics."""

    w: np.ndarray  # (m, *shape)
    mu: np.ndarray
    residuals: np.ndarray  # ||-Delta w + ... - mu u||_2 per component
    iterations: np.ndarray  # inner CG iterations (summed over Newton steps)
    newton_steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def field(self, grid: Grid, i: int) -> Field:
        return Field(grid, self.w[i])


def coupling_potential(u: State, spec: NonlinearitySpec, i: int) -> np.ndarray:
    """``S_i = sum_{j != i} F(u_j)`` as a flat array."""
    flat = u.values.reshape(u.m, -1)
    s = np.zeros(flat.shape[1])
    for j in range(u.m):
        if j != i:
            s += spec.F(flat[j])
    return s


def _ip(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return grid.cell_volume * float(np.dot(a, b))


def _solve_linear(grid, ui, potential, warm, mu_warm, tol, cg_tol):
    op = LinearOperator(grid, potential.reshape(grid.shape))
    x0 = None if warm is None or mu_warm is None or mu_warm <= 0 else warm / mu_warm
    unorm = np.sqrt(_ip(grid, ui, ui))
    rtol = cg_tol
    iters = 0
    for _ in range(4):
        res = pcg(op, ui, rtol, x0=x0, strict=False)
        iters += res.iterations
        z = res.x
        dot = _ip(grid, ui, z)
        if dot <= 0:
            raise ConvergenceError("linear K solve produced <u, A^-1 u> <= 0", residual=res.residual)
        mu = 1.0 / dot
        w = mu * z
        resid = np.sqrt(grid.cell_volume) * float(np.linalg.norm(op.matvec(w) - mu * ui))
        if resid <= tol * unorm:
            return w, mu, resid, iters, 0
        # the residual scales with mu, so tighten the relative CG target accordingly
        rtol = max(rtol * 0.5 * tol * unorm / resid, 1e-15)
        x0 = z
    raise ConvergenceError(
        f"linear K solve stalled at residual {resid:.3e} (target {tol * unorm:.3e})",
        residual=resid,
        iterations=iters,
    )


def _objective(grid, lap, a, spec, s, w):
    return grid.cell_volume * (
        0.5 * float(np.dot(lap @ w, w)) + a * float(np.sum(spec.G(w))) + float(np.dot(s, spec.F(w)))
    )


def _solve_newton(grid, lap, ui, a, spec, s, warm, tol, cg_tol, max_newton):
    unorm2 = _ip(grid, ui, ui)
    unorm = np.sqrt(unorm2)
    if warm is not None and _ip(grid, ui, warm) > 0:
        w = warm / _ip(grid, ui, warm)
    else:
        w = ui / unorm2
    iters = 0
    phi = _objective(grid, lap, a, spec, s, w)
    resid = np.inf
    mu = 0.0
    for step in range(max_newton + 1):
        grad = lap @ w + a * spec.g(w) + s * spec.f(w)
        # <grad, w> is the multiplier identity; on the constraint <u, w> = 1
        mu = _ip(grid, grad, w)
        r = grad - mu * ui
        resid = np.sqrt(grid.cell_volume) * float(np.linalg.norm(r))
        if resid <= tol * unorm:
            return w, mu, resid, iters, step
        if step == max_newton:
            break
        hdiag = a * spec.dg(w) + s * spec.df(w)
        op = LinearOperator(grid, hdiag.reshape(grid.shape))
        # solving against r = grad - mu u instead of grad gives the same step
        # but avoids cancelling two O(mu) vectors near convergence
        z1 = pcg(op, r, cg_tol, strict=False)
        z2 = pcg(op, ui, cg_tol, strict=False)
        iters += z1.iterations + z2.iterations
        kappa = _ip(grid, ui, z1.x) / _ip(grid, ui, z2.x)
        d = -z1.x + kappa * z2.x
        slope = _ip(grid, r, d)
        t = 1.0
        wn = w + d
        # once the predicted decrease is below round-off in phi the objective
        # cannot rank trial points; take the full Newton step
        if -slope > 64 * np.finfo(float).eps * max(1.0, abs(phi)):
            while True:
                phin = _objective(grid, lap, a, spec, s, wn)
                if phin <= phi + 1e-4 * t * slope:
                    break
                if t < 1e-12:
                    wn = w + d
                    break
                t *= 0.5
                wn = w + t * d
        # re-project onto the constraint to stop drift
        wn = wn / _ip(grid, ui, wn)
        w, phi = wn, _objective(grid, lap, a, spec, s, wn)
    raise ConvergenceError(
        f"Newton solve for K did not converge in {max_newton} steps (residual {resid:.3e})",
        residual=resid,
        iterations=max_newton,
    )


def solve_K(
    u: State,
    spec: NonlinearitySpec,
    tol: float = 1e-8,
    warm: KSolveResult | np.ndarray | None = None,
    cg_tol: float = 1e-10,
    max_newton: int = 50,
    force_newton: bool = False,
) -> KSolveResult:
    """Solve the auxiliary problem for every component of ``u``.

    Parameters
    ----------
    u : State
        Must lie in ``M*`` (all component norms above 1/2).
    spec : NonlinearitySpec
    tol : float
        Bound on each PDE residual relative to ``||u_i||_2``.
    warm : KSolveResult or array, optional
        Previous solutions used as starting guesses.
    force_newton : bool
        Use the convex-minimisation path even when the problem is linear.

    Raises
    ------
    ConfigError
        If ``u`` lies outside ``M*`` or ``spec.m`` disagrees with ``u.m``.
    ConvergenceError
        If an inner solve fails; ``component`` names the offender.
    """
    if spec.m != u.m:
        raise ConfigError(f"spec has m={spec.m} but state has {u.m} components", field="m")
    norms = u.norms
    if np.any(norms <= MSTAR_NORM):
        i = int(np.argmin(norms))
        raise ConfigError(f"component {i} has norm {norms[i]:.3g} <= 1/2, outside M*", field="state")
    grid = u.grid
    lap = _cached_laplacian(grid)
    flat = u.values.reshape(u.m, -1)
    if isinstance(warm, KSolveResult):
        warm_w, warm_mu = warm.w.reshape(u.m, -1), warm.mu
    elif warm is not None:
        warm_w, warm_mu = np.asarray(warm, dtype=float).reshape(u.m, -1), None
    else:
        warm_w, warm_mu = None, None
    ws, mus, res, its, nts = [], [], [], [], []
    for i in range(u.m):
        s = coupling_potential(u, spec, i)
        wi0 = None if warm_w is None else warm_w[i]
        try:
            if spec.is_linear and not force_newton:
                # f(w) S_i = sqrt(2 beta) S_i w, which is beta sum_j u_j^2 w
                mu_w = None if warm_mu is None else float(warm_mu[i])
                out = _solve_linear(grid, flat[i], spec.coupling_scale * s, wi0, mu_w, tol, cg_tol)
            else:
                out = _solve_newton(grid, lap, flat[i], spec.a[i], spec, s, wi0, tol, cg_tol, max_newton)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"K solve failed on component {i}: {exc}",
                residual=exc.residual,
                component=i,
                iterations=exc.iterations,
            ) from exc
        w, mu, r, it, nt = out
        ws.append(w)
        mus.append(mu)
        res.append(r)
        its.append(it)
        nts.append(nt)
    return KSolveResult(
        w=np.stack(ws).reshape(u.values.shape),
        mu=np.array(mus),
        residuals=np.array(res),
        iterations=np.array(its),
        newton_steps=np.array(nts),
    )


def pseudogradient(u: State, kres: KSolveResult) -> np.ndarray:
    """``V_i = u_i - w_i`` as an array of shape ``(m, *grid.shape)``."""
    if kres.w.shape != u.values.shape:
        raise GridMismatchError("K result does not match the state")
    return u.values - kres.w
