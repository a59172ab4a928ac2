"""JSON run configuration for the command-line tool.

A config document has optional sections ``ihr``, ``dgp``, ``ranks``,
``rolling``, ``inference`` and ``bench`` plus the top-level keys
``method`` and ``output_dir``. Unknown keys anywhere are rejected, and every
value is type-checked before any computation starts. Example::

    {"method": "ihr",
     "ihr": {"k1": 3, "k2": 3, "tau": null, "seed": 1},
     "dgp": {"T": 20, "p1": 20, "p2": 20, "error_dist": "t3", "seed": 1}}

``ihr.tau`` is ``null`` for the adaptive rule, a positive number for a fixed
threshold, or the string ``"inf"`` for least squares.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ValidationError
from .huber import HuberConfig
from .ihr import IhrOptions
from .simulation import ERROR_DISTS, DgpParams

__all__ = [
    "IhrSection",
    "DgpSection",
    "RanksSection",
    "RollingSection",
    "InferenceSection",
    "BenchSection",
    "RunConfig",
    "load_config",
    "parse_config",
]

METHODS = ("ihr", "ls", "alpha_pca")
PROFILES = ("smoke", "desk", "full")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


@dataclass(frozen=True)
class IhrSection:
    k1: int = 3
    k2: int = 3
    tau: float | str | None = None
    c1: float = 1.345
    max_irls_iters: int = 50
    irls_tol: float = 1e-8
    max_sweeps: int = 100
    cc_tol_factor: float = 1e-4
    init: str = "random_normal"
    seed: int = 0

    def validate(self) -> None:
        _check(_is_int(self.k1) and self.k1 >= 1, "ihr.k1 must be a positive integer")
        _check(_is_int(self.k2) and self.k2 >= 1, "ihr.k2 must be a positive integer")
        _check(self.tau is None or self.tau == "inf" or (_is_num(self.tau) and self.tau > 0),
               'ihr.tau must be null, a positive number or "inf"')
        _check(_is_num(self.c1) and self.c1 > 0, "ihr.c1 must be positive")
        _check(_is_int(self.max_irls_iters) and self.max_irls_iters >= 1, "ihr.max_irls_iters must be >= 1")
        _check(_is_num(self.irls_tol) and self.irls_tol > 0, "ihr.irls_tol must be positive")
        _check(_is_int(self.max_sweeps) and self.max_sweeps >= 1, "ihr.max_sweeps must be >= 1")
        _check(_is_num(self.cc_tol_factor) and self.cc_tol_factor > 0, "ihr.cc_tol_factor must be positive")
        _check(self.init in ("random_normal", "alpha_pca"), "ihr.init must be random_normal or alpha_pca")
        _check(_is_int(self.seed) and self.seed >= 0, "ihr.seed must be a non-negative integer")

    def huber(self) -> HuberConfig:
        from .baselines import LS_TAU

        tau = LS_TAU if self.tau == "inf" else self.tau
        return HuberConfig(tau=None if tau is None else float(tau), c1=float(self.c1),
                           max_irls_iters=self.max_irls_iters, irls_tol=float(self.irls_tol),
                           seed=self.seed)

    def options(self) -> IhrOptions:
        return IhrOptions(k1=self.k1, k2=self.k2, huber=self.huber(), max_sweeps=self.max_sweeps,
                          cc_tol_factor=float(self.cc_tol_factor), init=self.init, seed=self.seed)


@dataclass(frozen=True)
class DgpSection:
    T: int = 20
    p1: int = 20
    p2: int = 20
    k1: int = 3
    k2: int = 3
    phi: float = 0.1
    psi: float = 0.1
    error_dist: str = "normal"
    seed: int = 0
    standardize_t: bool = False

    def validate(self) -> None:
        for name in ("T", "p1", "p2", "k1", "k2"):
            _check(_is_int(getattr(self, name)) and getattr(self, name) >= 1,
                   f"dgp.{name} must be a positive integer")
        _check(_is_num(self.phi) and abs(self.phi) < 1, "dgp.phi must lie in (-1, 1)")
        _check(_is_num(self.psi) and abs(self.psi) < 1, "dgp.psi must lie in (-1, 1)")
        _check(self.error_dist in ERROR_DISTS, f"dgp.error_dist must be one of {ERROR_DISTS}")
        _check(_is_int(self.seed) and self.seed >= 0, "dgp.seed must be a non-negative integer")
        _check(isinstance(self.standardize_t, bool), "dgp.standardize_t must be a boolean")

    def params(self) -> DgpParams:
        return DgpParams(**dataclasses.asdict(self))


@dataclass(frozen=True)
class RanksSection:
    m1: int = 6
    m2: int = 6
    rm_exponent: float = 2.0 / 3.0
    er_c: float = 1e-4

    def validate(self) -> None:
        _check(_is_int(self.m1) and self.m1 >= 2, "ranks.m1 must be an integer >= 2")
        _check(_is_int(self.m2) and self.m2 >= 2, "ranks.m2 must be an integer >= 2")
        _check(_is_num(self.rm_exponent) and self.rm_exponent > 0, "ranks.rm_exponent must be positive")
        _check(_is_num(self.er_c) and self.er_c >= 0, "ranks.er_c must be non-negative")


@dataclass(frozen=True)
class RollingSection:
    bandwidth: int = 2
    horizon: int = 12

    def validate(self) -> None:
        _check(_is_int(self.bandwidth) and self.bandwidth >= 1, "rolling.bandwidth must be >= 1")
        _check(_is_int(self.horizon) and self.horizon >= 1, "rolling.horizon must be >= 1")


@dataclass(frozen=True)
class InferenceSection:
    alpha: float = 0.05
    tau: float | None = None

    def validate(self) -> None:
        _check(_is_num(self.alpha) and 0 < self.alpha < 1, "inference.alpha must lie in (0, 1)")
        _check(self.tau is None or (_is_num(self.tau) and self.tau > 0),
               "inference.tau must be null or a positive number")


@dataclass(frozen=True)
class BenchSection:
    reps: int | None = None
    master_seed: int = 2024

    def validate(self) -> None:
        _check(self.reps is None or (_is_int(self.reps) and self.reps >= 1), "bench.reps must be >= 1")
        _check(_is_int(self.master_seed) and self.master_seed >= 0, "bench.master_seed must be >= 0")


_SECTIONS = {
    "ihr": IhrSection,
    "dgp": DgpSection,
    "ranks": RanksSection,
    "rolling": RollingSection,
    "inference": InferenceSection,
    "bench": BenchSection,
}


@dataclass(frozen=True)
class RunConfig:
    method: str = "ihr"
    output_dir: str | None = None
    ihr: IhrSection = field(default_factory=IhrSection)
    dgp: DgpSection = field(default_factory=DgpSection)
    ranks: RanksSection = field(default_factory=RanksSection)
    rolling: RollingSection = field(default_factory=RollingSection)
    inference: InferenceSection = field(default_factory=InferenceSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def validate(self) -> "RunConfig":
        _check(self.method in METHODS, f"method must be one of {METHODS}")
        _check(self.output_dir is None or isinstance(self.output_dir, str), "output_dir must be a string")
        for name in _SECTIONS:
            getattr(self, name).validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def with_section(self, name: str, **changes) -> "RunConfig":
        """Copy with some fields of one section replaced (``None`` values are ignored)."""
        changes = {k: v for k, v in changes.items() if v is not None}
        if not changes:
            return self
        sec = dataclasses.replace(getattr(self, name), **changes)
        return dataclasses.replace(self, **{name: sec}).validate()


def _section(cls, doc: Any, name: str):
    if not isinstance(doc, dict):
        raise ValidationError(f"section {name!r} must be a JSON object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(f"unknown key(s) in {name!r}: {', '.join(unknown)}")
    return cls(**doc)


def parse_config(doc: Any) -> RunConfig:
    """Build and validate a :class:`RunConfig` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    top = {"method", "output_dir", *_SECTIONS}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ValidationError(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, cls in _SECTIONS.items():
        if name in doc:
            kwargs[name] = _section(cls, doc[name], name)
    for key in ("method", "output_dir"):
        if key in doc:
            kwargs[key] = doc[key]
    return RunConfig(**kwargs).validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)
