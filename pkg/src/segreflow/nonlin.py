"""Coupling and self-interaction kernels.

The system solved everywhere in this package is

    -Delta u_i + a_i g(u_i) + f(u_i) sum_{j != i} F(u_j) = lambda_i u_i

with ``f = sqrt(2 beta) f_n``, ``F = sqrt(2 beta) F_n`` and ``g = g_n``.
Without truncation ``f_n(t) = t`` and ``g_n(t) = t**3``, which gives the
cubic competition term ``beta u_i sum_j u_j**2``. The truncated kernels
grow like ``|t|**(p-1)`` and ``|t|**(q-1)`` beyond ``|t| = n`` and are
odd and C^1 across the junction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "NonlinearitySpec",
    "f_n",
    "g_n",
    "F_n",
    "G_n",
    "df_n",
    "dg_n",
    "InequalityReport",
    "check_inequalities",
    "growth_constant",
]

# For N <= 2 the critical Sobolev exponent is infinite, so the admissible
# windows (1, min(2*/2, 3)) and (1, min(2*, 3)) both reduce to (1, 3).
EXPONENT_UPPER = 3.0


@dataclass(frozen=True)
class NonlinearitySpec:
    """Parameters of the kernels; ``n=None`` switches truncation off."""

    m: int
    a: tuple[float, ...]
    beta: float
    n: float | None = None
    p: float = 1.5
    q: float = 2.0

    def __post_init__(self):
        a = tuple(float(x) for x in np.broadcast_to(np.asarray(self.a, dtype=float), (self.m,)))
        object.__setattr__(self, "a", a)
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}", field="m")
        if any(x < 0 for x in a):
            raise ConfigError("self-interaction coefficients must be >= 0", field="a")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}", field="beta")
        if self.n is not None and not self.n > 0:
            raise ConfigError(f"truncation level must be positive or off, got {self.n}", field="nonlinearity.truncation")
        if not 1 < self.p < EXPONENT_UPPER:
            raise ConfigError(f"p must lie in (1, 3), got {self.p}", field="nonlinearity.p")
        if not 1 < self.q < EXPONENT_UPPER:
            raise ConfigError(f"q must lie in (1, 3), got {self.q}", field="nonlinearity.q")

    @property
    def theta(self) -> float:
        return max(3.0, self.q - 1.0) + 1.0

    @property
    def truncated(self) -> bool:
        return self.n is not None

    @property
    def is_linear(self) -> bool:
        """True when the auxiliary problem for K is linear in ``w``."""
        return not self.truncated and all(x == 0 for x in self.a)

    @property
    def coupling_scale(self) -> float:
        return math.sqrt(2.0 * self.beta)

    def with_beta(self, beta: float) -> "NonlinearitySpec":
        return NonlinearitySpec(self.m, self.a, beta, self.n, self.p, self.q)

    # kernels of the general system
    def f(self, t):
        return self.coupling_scale * f_n(t, self)

    def df(self, t):
        return self.coupling_scale * df_n(t, self)

    def F(self, t):
        return self.coupling_scale * F_n(t, self)

    def g(self, t):
        return g_n(t, self)

    def dg(self, t):
        return dg_n(t, self)

    def G(self, t):
        return G_n(t, self)

    def describe(self) -> dict:
        return {"m": self.m, "a": list(self.a), "beta": self.beta, "n": self.n, "p": self.p, "q": self.q}


def f_n(t, spec: NonlinearitySpec):
    t = np.asarray(t, dtype=float)
    n, p = spec.n, spec.p
    if n is None:
        return t.copy() if t.ndim else float(t)
    at = np.abs(t)
    outer = np.sign(t) * (at ** (p - 1) / ((p - 1) * n ** (p - 2)) + n - n / (p - 1))
    out = np.where(at <= n, t, outer)
    return out if out.ndim else float(out)


def df_n(t, spec: NonlinearitySpec):
    t = np.asarray(t, dtype=float)
    n, p = spec.n, spec.p
    if n is None:
        out = np.ones_like(t)
    else:
        at = np.abs(t)
        # guard the power for the inner branch, where it is unused
        out = np.where(at <= n, 1.0, (np.maximum(at, n) / n) ** (p - 2))
    return out if out.ndim else float(out)


def F_n(t, spec: NonlinearitySpec):
    t = np.asarray(t, dtype=float)
    n, p = spec.n, spec.p
    if n is None:
        out = 0.5 * t * t
    else:
        at = np.abs(t)
        outer = (
            (at**p - n**p) / (p * (p - 1) * n ** (p - 2))
            + (n - n / (p - 1)) * (at - n)
            + 0.5 * n * n
        )
        out = np.where(at <= n, 0.5 * t * t, outer)
    return out if out.ndim else float(out)


def g_n(t, spec: NonlinearitySpec):
    t = np.asarray(t, dtype=float)
    n, q = spec.n, spec.q
    if n is None:
        out = t**3
    else:
        at = np.abs(t)
        outer = np.sign(t) * (3 * at ** (q - 1) / ((q - 1) * n ** (q - 4)) + n**3 - 3 * n**3 / (q - 1))
        out = np.where(at <= n, t**3, outer)
    return out if out.ndim else float(out)


def dg_n(t, spec: NonlinearitySpec):
    t = np.asarray(t, dtype=float)
    n, q = spec.n, spec.q
    if n is None:
        out = 3 * t * t
    else:
        at = np.abs(t)
        out = np.where(at <= n, 3 * t * t, 3 * np.maximum(at, n) ** (q - 2) / n ** (q - 4))
    return out if out.ndim else float(out)


def G_n(t, spec: NonlinearitySpec):
    t = np.asarray(t, dtype=float)
    n, q = spec.n, spec.q
    if n is None:
        out = 0.25 * t**4
    else:
        at = np.abs(t)
        outer = (
            3 * (at**q - n**q) / (q * (q - 1) * n ** (q - 4))
            + (n**3 - 3 * n**3 / (q - 1)) * (at - n)
            + 0.25 * n**4
        )
        out = np.where(at <= n, 0.25 * t**4, outer)
    return out if out.ndim else float(out)


@dataclass
class InequalityReport:
    """Largest violations found by :func:`check_inequalities`.

    Violations are scaled by ``max(1, |lhs|, |rhs|)``: both sides reach
    ``1e12`` on the sampled box, where absolute round-off alone exceeds
    ``1e-12``.
    """

    samples: int
    theta: float
    violations: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-12

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.violations.values())

    def lines(self) -> list[str]:
        return [
            f"{name:<28s} max violation {v:.3e}  {'ok' if v <= self.tolerance else 'FAIL'}"
            for name, v in self.violations.items()
        ]


def _violation(lhs, rhs) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    return float(np.max(np.maximum(lhs - rhs, 0.0) / scale, initial=0.0))


def check_inequalities(spec: NonlinearitySpec, samples: int, seed: int = 0, tolerance: float = 1e-12) -> InequalityReport:
    """Sample ``(s, t)`` uniformly in ``[-10n, 10n]^2`` and test the kernel inequalities.

    Checked: ``f t <= theta F``, ``g t <= theta G``, the rearrangement
    inequality ``k(s) t + k(t) s <= k(s) s + k(t) t`` for ``k = f, g``, and
    ``g(t) <= t**3`` for ``t >= 0``.
    """
    if samples < 1:
        raise ConfigError("samples must be >= 1", field="samples")
    n = spec.n if spec.n is not None else 1.0
    rng = np.random.default_rng(seed)
    s, t = rng.uniform(-10 * n, 10 * n, size=(2, samples))
    theta = spec.theta
    rep = InequalityReport(samples=samples, theta=theta, tolerance=tolerance)
    fs, ft = f_n(s, spec), f_n(t, spec)
    gs, gt = g_n(s, spec), g_n(t, spec)
    rep.violations["f(t)t <= theta F(t)"] = _violation(ft * t, theta * F_n(t, spec))
    rep.violations["g(t)t <= theta G(t)"] = _violation(gt * t, theta * G_n(t, spec))
    rep.violations["f rearrangement"] = _violation(fs * t + ft * s, fs * s + ft * t)
    rep.violations["g rearrangement"] = _violation(gs * t + gt * s, gs * s + gt * t)
    tp = np.abs(t)
    rep.violations["g(t) <= t^3, t >= 0"] = _violation(g_n(tp, spec), tp**3)
    return rep


def growth_constant(spec: NonlinearitySpec, kernel: str, t: Sequence[float] | np.ndarray) -> float:
    """Smallest ``C`` with ``|k(t)| <= C (1 + |t|**(r-1))`` on the sample ``t``.

    ``kernel`` is ``"f"`` (r = p) or ``"g"`` (r = q).
    """
    t = np.asarray(t, dtype=float)
    if kernel == "f":
        vals, r = f_n(t, spec), spec.p
    elif kernel == "g":
        vals, r = g_n(t, spec), spec.q
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return float(np.max(np.abs(vals) / (1 + np.abs(t) ** (r - 1))))
