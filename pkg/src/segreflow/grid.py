"""Uniform vertex-centred grids on intervals and rectangles.

Only interior points carry unknowns; homogeneous Dirichlet values on the
boundary are implicit. Every integral uses the discrete measure ``h**N``
per point, which is consistent with the stencil Laplacian in
:mod:`segreflow.linops`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, EmptySupportError, GridMismatchError

__all__ = [
    "Grid",
    "Field",
    "SubdomainMask",
    "build_grid",
    "l2_inner",
    "l2_norm",
    "support_mask",
    "rectangle_mask",
]


@dataclass(frozen=True)
class Grid:
    """Interior points of ``(0, L_0) x ... x (0, L_{N-1})``, ``N in {1, 2}``."""

    extents: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / (c + 1) for e, c in zip(self.extents, self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_volume(self) -> float:
        """Quadrature weight ``h**N`` attached to each interior point."""
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        """Coordinates of the interior points along axis ``i``."""
        h = self.spacing[i]
        return h * np.arange(1, self.counts[i] + 1)

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape ``self.shape`` ('ij' indexing)."""
        return tuple(np.meshgrid(*(self.axis(i) for i in range(self.dim)), indexing="ij"))

    def sample(self, fn: Callable[..., np.ndarray]) -> "Field":
        """Evaluate ``fn(x[, y])`` at the interior points."""
        return Field(self, np.asarray(fn(*self.coords), dtype=float))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def describe(self) -> dict:
        return {"extents": list(self.extents), "counts": list(self.counts)}


def build_grid(extents: Sequence[float] | float, counts: Sequence[int] | int) -> Grid:
    """Validate a domain descriptor and build the grid.

    Examples
    --------
    >>> build_grid(1.0, 1000).spacing
    (0.000999000999000999,)
    """
    ext = tuple(float(e) for e in np.atleast_1d(extents))
    cnt = tuple(int(c) for c in np.atleast_1d(counts))
    if len(ext) != len(cnt):
        raise ConfigError("extents and counts must have the same length", field="domain")
    if len(ext) not in (1, 2):
        raise ConfigError(f"only 1D and 2D domains are supported, got N={len(ext)}", field="domain")
    for e in ext:
        if not np.isfinite(e) or e <= 0:
            raise ConfigError(f"domain extent must be positive, got {e}", field="domain.extents")
    for c in cnt:
        if c < 3:
            raise ConfigError(f"interior point count must be >= 3, got {c}", field="domain.counts")
    return Grid(ext, cnt)


def _check_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch: {a.grid} vs {b.grid}")


@dataclass(frozen=True, eq=False)
class Field:
    """A real grid function; boundary values are implicitly zero."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.size == self.grid.size and v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"field of shape {v.shape} on grid of shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def norm(self) -> float:
        return l2_norm(self)

    def normalized(self) -> "Field":
        n = self.norm()
        if n == 0:
            raise EmptySupportError("cannot normalize the zero field")
        return self * (1.0 / n)


@dataclass(frozen=True, eq=False)
class SubdomainMask:
    """Boolean indicator of a discrete subdomain."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=bool)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"mask of shape {v.shape} on grid of shape {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.sum())

    @property
    def measure(self) -> float:
        return self.count * self.grid.cell_volume

    def n_components(self) -> int:
        """Number of connected components (face connectivity)."""
        from scipy import ndimage

        _, n = ndimage.label(self.values)
        return int(n)

    def __or__(self, other: "SubdomainMask") -> "SubdomainMask":
        _check_same_grid(self, other)
        return SubdomainMask(self.grid, self.values | other.values)

    def __and__(self, other: "SubdomainMask") -> "SubdomainMask":
        _check_same_grid(self, other)
        return SubdomainMask(self.grid, self.values & other.values)


def l2_inner(a: Field, b: Field) -> float:
    """Discrete ``int_Omega a b dx`` with weight ``h**N`` per interior point."""
    _check_same_grid(a, b)
    return a.grid.cell_volume * float(np.dot(a.values.ravel(), b.values.ravel()))


def l2_norm(a: Field) -> float:
    return float(np.sqrt(l2_inner(a, a)))


def support_mask(u: Field, tol: float) -> SubdomainMask:
    """Points where ``|u| > tol * max|u|``."""
    if not 0 < tol < 1:
        raise ConfigError(f"support tolerance must lie in (0, 1), got {tol}", field="support_tol")
    amax = float(np.max(np.abs(u.values)))
    if amax == 0:
        raise EmptySupportError("field is identically zero")
    return SubdomainMask(u.grid, np.abs(u.values) > tol * amax)


def rectangle_mask(grid: Grid, rects: Sequence[Sequence[Sequence[float]]]) -> SubdomainMask:
    """Union of open boxes, each given as one ``[lo, hi]`` pair per axis.

    Grid points lying exactly on a box face are excluded, so adjacent
    boxes sharing a face stay disjoint.
    """
    out = np.zeros(grid.shape, dtype=bool)
    for rect in rects:
        if len(rect) != grid.dim:
            raise ConfigError(f"rectangle {rect} does not match grid dimension {grid.dim}", field="partition")
        inside = np.ones(grid.shape, dtype=bool)
        for ax, (lo, hi) in enumerate(rect):
            if not lo < hi:
                raise ConfigError(f"empty rectangle side [{lo}, {hi}]", field="partition")
            x = grid.coords[ax]
            h = grid.spacing[ax]
            # snap to avoid losing points to rounding when a face sits on a node
            inside &= (x > lo + 1e-9 * h) & (x < hi - 1e-9 * h)
        out |= inside
    return SubdomainMask(grid, out)
