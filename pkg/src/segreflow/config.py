"""Run configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .flow import CONE_DELTA_MAX
from .grid import build_grid

__all__ = ["DomainConfig", "NonlinearityConfig", "FlowConfig", "RunConfig", "load_config"]


def _reject_unknown(cls, data: dict, where: str) -> None:
    known = {f.name for f in fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in {where}", field=f"{where}.{extra[0]}" if where else extra[0])


def _positive(value, name: str) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive number, got {value!r}", field=name)


@dataclass(frozen=True)
class DomainConfig:
    extents: tuple[float, ...] = (1.0,)
    counts: tuple[int, ...] = (1000,)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainConfig":
        _reject_unknown(cls, d, "domain")
        ext = d.get("extents", cls.extents)
        cnt = d.get("counts", cls.counts)
        ext = (ext,) if isinstance(ext, (int, float)) else ext
        cnt = (cnt,) if isinstance(cnt, int) else cnt
        return cls(tuple(float(e) for e in ext), tuple(int(c) for c in cnt))


@dataclass(frozen=True)
class NonlinearityConfig:
    p: float = 1.5
    q: float = 2.0
    truncation: float | None = None  # None means "off"

    @classmethod
    def from_dict(cls, d: dict) -> "NonlinearityConfig":
        _reject_unknown(cls, d, "nonlinearity")
        trunc = d.get("truncation", None)
        if trunc == "off":
            trunc = None
        return cls(float(d.get("p", cls.p)), float(d.get("q", cls.q)), None if trunc is None else float(trunc))


@dataclass(frozen=True)
class FlowConfig:
    residual_tol: float = 1e-6
    max_steps: int = 50_000
    max_time: float | None = None
    dt0: float = 0.1
    dt_max: float = 0.5
    k_tol: float = 1e-8
    cg_tol: float = 1e-10

    @classmethod
    def from_dict(cls, d: dict) -> "FlowConfig":
        _reject_unknown(cls, d, "flow")
        out = replace(cls(), **d)
        for name in ("residual_tol", "dt0", "dt_max", "k_tol", "cg_tol"):
            _positive(getattr(out, name), f"flow.{name}")
        if out.max_time is not None:
            _positive(out.max_time, "flow.max_time")
        if not isinstance(out.max_steps, int) or out.max_steps < 1:
            raise ConfigError("flow.max_steps must be a positive integer", field="flow.max_steps")
        if not out.dt0 <= out.dt_max <= 1:
            raise ConfigError("need dt0 <= dt_max <= 1", field="flow.dt_max")
        if not out.cg_tol < 1:
            raise ConfigError("flow.cg_tol must be below 1", field="flow.cg_tol")
        return out


@dataclass(frozen=True)
class RunConfig:
    """Everything a ``solve``/``ladder`` run needs; see README for the JSON layout."""

    domain: DomainConfig = field(default_factory=DomainConfig)
    m: int = 2
    a: tuple[float, ...] = (0.0,)
    k: tuple[int, ...] = (2, 2)
    experimental_k: bool = False
    beta: float = 100.0
    betas: tuple[float, ...] | None = None
    nonlinearity: NonlinearityConfig = field(default_factory=NonlinearityConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    symmetry: str = "reflect"
    cone_delta: float = 0.1
    partition: tuple | None = None  # per component: list of boxes, each [[lo, hi], ...]
    mix: tuple[float, ...] | None = None
    noise: float = 0.0
    support_tol: float = 1e-3
    seed: int = 0
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        build_grid(self.domain.extents, self.domain.counts)
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigError(f"m must be a positive integer, got {self.m!r}", field="m")
        if len(self.a) not in (1, self.m):
            raise ConfigError(f"a needs 1 or m={self.m} entries", field="a")
        if any(x < 0 for x in self.a):
            raise ConfigError("a entries must be >= 0", field="a")
        if len(self.k) != self.m:
            raise ConfigError(f"k needs m={self.m} entries, got {len(self.k)}", field="k")
        for x in self.k:
            if x < 1:
                raise ConfigError(f"k entries must be >= 1, got {x}", field="k")
            if x > 2 and not self.experimental_k:
                raise ConfigError(f"k entry {x} > 2 requires experimental_k", field="k")
        _positive(self.beta, "beta")
        if self.betas is not None:
            if not self.betas:
                raise ConfigError("betas must be nonempty", field="betas")
            for b in self.betas:
                _positive(b, "betas")
            if any(b2 <= b1 for b1, b2 in zip(self.betas, self.betas[1:])):
                raise ConfigError("betas must be strictly increasing", field="betas")
        if self.symmetry not in ("none", "reflect"):
            raise ConfigError(f"symmetry must be 'none' or 'reflect', got {self.symmetry!r}", field="symmetry")
        if not isinstance(self.cone_delta, (int, float)) or not 0 < self.cone_delta < CONE_DELTA_MAX:
            raise ConfigError(
                f"cone_delta must lie in (0, sqrt(2)/2 ~ {CONE_DELTA_MAX:.6f}), got {self.cone_delta!r}",
                field="cone_delta",
            )
        if self.partition is not None and len(self.partition) != self.m:
            raise ConfigError(f"partition needs one box list per component (m={self.m})", field="partition")
        if self.mix is not None and len(self.mix) != self.m:
            raise ConfigError(f"mix needs m={self.m} angles", field="mix")
        if not self.noise >= 0:
            raise ConfigError("noise must be >= 0", field="noise")
        if not 0 < self.support_tol < 1:
            raise ConfigError(f"support_tol must lie in (0, 1), got {self.support_tol}", field="support_tol")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}", field="seed")

    @property
    def a_vector(self) -> tuple[float, ...]:
        return self.a * self.m if len(self.a) == 1 else self.a

    @property
    def schedule(self) -> tuple[float, ...]:
        return self.betas if self.betas is not None else (self.beta,)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object", field="")
        _reject_unknown(cls, d, "")
        kw: dict[str, Any] = {}
        try:
            if "domain" in d:
                kw["domain"] = DomainConfig.from_dict(d["domain"])
            if "nonlinearity" in d:
                kw["nonlinearity"] = NonlinearityConfig.from_dict(d["nonlinearity"])
            if "flow" in d:
                kw["flow"] = FlowConfig.from_dict(d["flow"])
            for name in ("m", "seed"):
                if name in d:
                    kw[name] = d[name]
            for name in ("beta", "cone_delta", "support_tol", "noise"):
                if name in d:
                    kw[name] = d[name]
            for name in ("experimental_k",):
                if name in d:
                    kw[name] = bool(d[name])
            for name in ("symmetry", "output_dir"):
                if name in d:
                    kw[name] = str(d[name])
            if "a" in d:
                a = d["a"]
                kw["a"] = (float(a),) if isinstance(a, (int, float)) else tuple(float(x) for x in a)
            if "k" in d:
                kw["k"] = tuple(int(x) for x in d["k"])
            if d.get("betas") is not None:
                kw["betas"] = tuple(float(x) for x in d["betas"])
            if d.get("mix") is not None:
                kw["mix"] = tuple(float(x) for x in d["mix"])
            if d.get("partition") is not None:
                kw["partition"] = _freeze(d["partition"])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed configuration: {exc}", field="") from exc
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        return _thaw(asdict(self))

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if not kw:
            return self
        d = self.to_dict()
        if "grid" in kw:
            counts = kw.pop("grid")
            ext = list(self.domain.extents)
            if len(counts) == 1 and len(ext) > 1:
                counts = counts * len(ext)
            if len(counts) != len(ext):
                # a new dimension: unit extents along the added axes
                ext = (ext + [1.0] * len(counts))[: len(counts)]
            d["domain"] = {"extents": ext, "counts": list(counts)}
            d["partition"] = self.to_dict()["partition"] if len(ext) == self.domain_dim else None
        d.update(kw)
        return RunConfig.from_dict(d)

    @property
    def domain_dim(self) -> int:
        return len(self.domain.extents)


def _freeze(obj):
    if isinstance(obj, (list, tuple)):
        return tuple(_freeze(x) for x in obj)
    return obj


def _thaw(obj):
    if isinstance(obj, dict):
        return {k: _thaw(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_thaw(x) for x in obj]
    return obj


def load_config(path: str | Path | None, **overrides) -> RunConfig:
    """Read a JSON config (or the defaults when ``path`` is None) and apply overrides."""
    if path is None:
        cfg = RunConfig()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", field="config") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}", field="config") from exc
        cfg = RunConfig.from_dict(data)
    return cfg.with_overrides(**overrides)
