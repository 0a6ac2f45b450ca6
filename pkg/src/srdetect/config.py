"""Flat TOML run configurations for the command-line harness.

A file looks like::

    family = "gaussian_mean_shift"
    pre = 0.0
    post = 1.0
    rule = "sr"
    B = 100
    n_reps = 100000
    seed = 12345

Exactly one of ``threshold`` and ``B`` names the operating point.  Unknown
keys are rejected so a typo cannot silently fall back to a default.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .detectors import ThresholdRule
from .models import ObservationModel

KINDS = ("sr", "cusum", "shiryaev")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    family: str = "gaussian_mean_shift"
    pre: float | list = 0.0
    post: float | list = 1.0
    rule: str = "sr"
    rules: list = field(default_factory=lambda: ["sr", "cusum"])
    threshold: float | None = None
    thresholds: list | None = None
    B: float | None = None
    B_mixture: list | None = None
    rho: float = 0.0
    c: float | None = None
    nu: float = math.inf
    n_reps: int = 10_000
    calib_reps: int = 10_000
    K: int | str = "auto"
    seed: int | None = None
    rel_tol: float = 0.02
    out: str | None = None

    def model(self) -> ObservationModel:
        return ObservationModel(self.family, _tuple(self.pre), _tuple(self.post))

    def validate(self) -> "RunConfig":
        if self.rule not in KINDS:
            raise ConfigError(f"rule must be one of {KINDS}, got {self.rule!r}")
        for r in self.rules:
            if r not in KINDS:
                raise ConfigError(f"rules entries must be in {KINDS}, got {r!r}")
        if self.threshold is not None and self.B is not None:
            raise ConfigError("give exactly one of 'threshold' and 'B', not both")
        if isinstance(self.nu, str):
            if self.nu.lower() != "inf":
                raise ConfigError(f"nu must be a positive integer or \"inf\", got {self.nu!r}")
            self.nu = math.inf
        elif not (self.nu >= 1 and (math.isinf(self.nu) or float(self.nu).is_integer())):
            raise ConfigError(f"nu must be a positive integer or \"inf\", got {self.nu!r}")
        if isinstance(self.K, str) and self.K != "auto":
            raise ConfigError(f"K must be a positive integer or \"auto\", got {self.K!r}")
        if self.n_reps < 2 or self.calib_reps < 2:
            raise ConfigError("n_reps and calib_reps must be >= 2")
        if self.rule == "shiryaev" and not 0 < self.rho < 1:
            raise ConfigError("the shiryaev rule needs 0 < rho < 1")
        try:
            self.model()
        except ValueError as exc:
            raise ConfigError(f"bad model: {exc}") from exc
        return self

    def require_point(self) -> None:
        if (self.threshold is None) == (self.B is None):
            raise ConfigError("give exactly one of 'threshold' and 'B'")

    def fixed_rule(self) -> ThresholdRule:
        return ThresholdRule(self.rule, float(self.threshold), self.rho)


def _tuple(v):
    return tuple(v) if isinstance(v, list) else v


KNOWN = {f.name for f in fields(RunConfig)}


def from_mapping(data: dict) -> RunConfig:
    unknown = sorted(set(data) - KNOWN)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    return RunConfig(**data).validate()


def load(path: str, overrides: dict | None = None) -> RunConfig:
    """Read a TOML file; non-``None`` entries of ``overrides`` win over the file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_mapping(data)
