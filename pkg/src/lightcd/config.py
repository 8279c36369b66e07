"""Detector configuration: dataclasses plus flat ``key=value`` loading.

Keys use dotted names (``pca.c``, ``factor.s1``, ``ph.lambda`` ...).  Values
from the environment (``LIGHTCD_PCA_C=100``) override the file, and explicit
overrides (CLI flags) override both.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .core import LightError

ENV_PREFIX = "LIGHTCD_"

# default Page-Hinkley drift allowance, in units of the epoch's score spread
NORMALIZED_PH_DELTA = 1.0


class ConfigError(LightError, ValueError):
    pass


@dataclass
class PCAConfig:
    c: int = 200
    variance_fraction: float = 0.90
    deterministic: bool = True
    seed: Optional[int] = 0


@dataclass
class FactorConfig:
    s1: int = 50
    s2: int = 3
    exact: bool = False
    seed: Optional[int] = 0


@dataclass
class DivConfig:
    subsample_threshold: int = 2000
    seed: Optional[int] = 0


@dataclass
class PHConfig:
    # alarm threshold; calibrate per stream (see detector.calibrate)
    lam: float = 50.0
    # drift allowance; None picks NORMALIZED_PH_DELTA for normalized scores
    # and 0.005 x the running mean of past scores otherwise
    delta: Optional[float] = None


@dataclass
class DetectorConfig:
    m: int = 200
    variant: str = "light"
    normalize_scores: bool = True
    normalize_input: bool = False
    pca: PCAConfig = field(default_factory=PCAConfig)
    factor: FactorConfig = field(default_factory=FactorConfig)
    div: DivConfig = field(default_factory=DivConfig)
    ph: PHConfig = field(default_factory=PHConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.m < 2:
            raise ConfigError("m must be >= 2")
        if not self.ph.lam > 0:
            raise ConfigError("ph.lambda must be > 0")
        if self.ph.delta is not None and self.ph.delta < 0:
            raise ConfigError("ph.delta must be >= 0")
        if not 0 < self.pca.variance_fraction <= 1:
            raise ConfigError("pca.variance_fraction must lie in (0, 1]")
        if self.pca.c < 1 or self.factor.s1 < 1 or self.factor.s2 < 1:
            raise ConfigError("pca.c, factor.s1 and factor.s2 must be positive")
        if self.variant not in ("light", "ind", "nf", "np"):
            raise ConfigError(f"unknown variant {self.variant!r}")

    def to_flat(self) -> dict:
        flat = {}
        for key, (section, name) in _KEYS.items():
            obj = getattr(self, section) if section else self
            flat[key] = getattr(obj, name)
        return flat

    def replace(self, **flat) -> "DetectorConfig":
        cfg = dataclasses.replace(
            self,
            pca=dataclasses.replace(self.pca),
            factor=dataclasses.replace(self.factor),
            div=dataclasses.replace(self.div),
            ph=dataclasses.replace(self.ph),
        )
        _apply(cfg, {k.replace("__", "."): v for k, v in flat.items()})
        cfg.validate()
        return cfg

    @classmethod
    def from_flat(cls, values: Mapping[str, Any]) -> "DetectorConfig":
        cfg = cls()
        _apply(cfg, values)
        cfg.validate()
        return cfg


# flat key -> (section attribute or "", field name)
_KEYS = {
    "m": ("", "m"),
    "variant": ("", "variant"),
    "normalize_scores": ("", "normalize_scores"),
    "normalize_input": ("", "normalize_input"),
    "pca.c": ("pca", "c"),
    "pca.variance_fraction": ("pca", "variance_fraction"),
    "pca.deterministic": ("pca", "deterministic"),
    "pca.seed": ("pca", "seed"),
    "factor.s1": ("factor", "s1"),
    "factor.s2": ("factor", "s2"),
    "factor.exact": ("factor", "exact"),
    "factor.seed": ("factor", "seed"),
    "div.subsample_threshold": ("div", "subsample_threshold"),
    "div.seed": ("div", "seed"),
    "ph.lambda": ("ph", "lam"),
    "ph.delta": ("ph", "delta"),
}

_BOOL = {"true": True, "1": True, "yes": True, "on": True,
         "false": False, "0": False, "no": False, "off": False}


def _coerce(raw: Any, current: Any, key: str) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    try:
        if isinstance(current, bool):
            return _BOOL[text.lower()]
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float) or key in ("ph.delta",):
            return float(text)
        if key.endswith(".seed"):
            return int(text)
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


def _apply(cfg: DetectorConfig, values: Mapping[str, Any]):
    for key, raw in values.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        section, name = _KEYS[key]
        obj = getattr(cfg, section) if section else cfg
        setattr(obj, name, _coerce(raw, getattr(obj, name), key))


def parse_flat(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> dict:
    """``LIGHTCD_PCA_VARIANCE_FRACTION=0.95`` -> ``{"pca.variance_fraction": "0.95"}``."""
    environ = os.environ if environ is None else environ
    by_env = {ENV_PREFIX + k.upper().replace(".", "_"): k for k in _KEYS}
    return {by_env[name]: value for name, value in environ.items() if name in by_env}


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> DetectorConfig:
    values: dict = {}
    if path:
        with open(path) as fh:
            values.update(parse_flat(fh.read()))
    values.update(env_overrides(environ))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return DetectorConfig.from_flat(values)
