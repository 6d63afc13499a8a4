"""Experiment configuration: a flat JSON object, with ``initial_data`` nested one level."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field as dc_field, replace
from fractions import Fraction
from typing import Any, Optional

from .uniform import kato_exponent

MODES = ("run", "naive", "uniform", "check", "consistency", "sweep")
ARITHMETIC = ("float64", "rational")
DATA_KINDS = ("point", "ball", "file")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


@dataclass(frozen=True)
class InitialData:
    kind: str = "point"
    radius: int = 0
    u0_value: Any = 0
    u1_value: Any = 1
    path: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    d: int = 1
    p: Any = 2
    delta: Any = 1.0
    K: Optional[int] = None
    g: Any = None
    lam: Any = None
    scaled: bool = False
    initial_data: InitialData = dc_field(default_factory=InitialData)
    max_steps: int = 100_000
    record_every: int = 1
    snapshot_every: Optional[int] = None
    arithmetic: str = "float64"
    seed: int = 0
    output_dir: str = "out"
    tail_fraction: float = 0.5
    engine: str = "auto"
    max_bits: int = 1 << 20
    # sweep
    p_values: tuple = ()
    delta_values: tuple = ()
    sweep_kind: str = "lattice"
    # check
    cases: int = 100_000
    max_s: int = 8
    # consistency
    deltas: tuple = (0.04, 0.02, 0.01)
    dims: tuple = (1, 2)
    warnings: tuple = ()

    @property
    def exact(self) -> bool:
        return self.arithmetic == "rational"

    def canonical(self) -> dict:
        """Plain-JSON view used for hashing; warnings and output_dir are excluded."""
        out = {}
        for k, v in asdict(self).items():
            if k in ("warnings", "output_dir"):
                continue
            out[k] = _plain(v)
        return out

    def digest(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _plain(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


# -- field validators ------------------------------------------------------------


def _int(path, v, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {type(v).__name__}")
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be at least {lo}")
    return v


def _num(path, v):
    """Number or a rational literal such as "1/2" (kept as a Fraction)."""
    if isinstance(v, bool):
        raise ConfigError(f"{path}: expected a number, got bool")
    if isinstance(v, (int, float)):
        if not math.isfinite(v):
            raise ConfigError(f"{path}: must be finite")
        return v
    if isinstance(v, str):
        try:
            return Fraction(v)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"{path}: cannot parse {v!r} as a number") from None
    raise ConfigError(f"{path}: expected a number, got {type(v).__name__}")


def _choice(path, v, options):
    if v not in options:
        raise ConfigError(f"{path}: must be one of {', '.join(options)}")
    return v


def _num_list(path, v):
    if not isinstance(v, list):
        raise ConfigError(f"{path}: expected a list")
    return tuple(_num(f"{path}[{i}]", x) for i, x in enumerate(v))


def _int_list(path, v):
    if not isinstance(v, list):
        raise ConfigError(f"{path}: expected a list")
    return tuple(_int(f"{path}[{i}]", x, 1) for i, x in enumerate(v))


def _bool(path, v):
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected true or false")
    return v


_TOP = {
    "mode": lambda p, v: _choice(p, v, MODES),
    "d": lambda p, v: _int(p, v, 1),
    "p": _num,
    "delta": _num,
    "K": lambda p, v: _int(p, v, 1),
    "g": _num,
    "lam": _num,
    "scaled": _bool,
    "max_steps": lambda p, v: _int(p, v, 1),
    "record_every": lambda p, v: _int(p, v, 1),
    "snapshot_every": lambda p, v: _int(p, v, 1),
    "arithmetic": lambda p, v: _choice(p, v, ARITHMETIC),
    "seed": lambda p, v: _int(p, v, 0),
    "output_dir": lambda p, v: v if isinstance(v, str) else _bad(p, "a string"),
    "tail_fraction": _num,
    "engine": lambda p, v: _choice(p, v, ("auto", "field", "kernel")),
    "max_bits": lambda p, v: _int(p, v, 1),
    "p_values": _num_list,
    "delta_values": _num_list,
    "sweep_kind": lambda p, v: _choice(p, v, ("lattice", "uniform")),
    "cases": lambda p, v: _int(p, v, 1),
    "max_s": lambda p, v: _int(p, v, 1),
    "deltas": _num_list,
    "dims": _int_list,
}

_DATA = {
    "kind": lambda p, v: _choice(p, v, DATA_KINDS),
    "radius": lambda p, v: _int(p, v, 0),
    "u0_value": _num,
    "u1_value": _num,
    "path": lambda p, v: v if isinstance(v, str) else _bad(p, "a string"),
}


def _bad(path, what):
    raise ConfigError(f"{path}: expected {what}")


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Validate a decoded document and apply defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be an object")
    kw: dict = {}
    for key, val in doc.items():
        if key == "initial_data":
            continue
        if key not in _TOP:
            raise ConfigError(f"{key}: unknown key")
        kw[key] = _TOP[key](key, val)
    if "p" in kw and not kw["p"] > 1:
        raise ConfigError("p: p must exceed 1")
    if "mode" not in kw:
        raise ConfigError("mode: required")
    if "initial_data" in doc:
        raw = doc["initial_data"]
        if not isinstance(raw, dict):
            raise ConfigError("initial_data: expected an object")
        dk = {}
        for key, val in raw.items():
            if key not in _DATA:
                raise ConfigError(f"initial_data.{key}: unknown key")
            dk[key] = _DATA[key](f"initial_data.{key}", val)
        data = InitialData(**dk)
        if data.kind == "file" and not data.path:
            raise ConfigError("initial_data.path: required for kind 'file'")
        kw["initial_data"] = data
    cfg = ExperimentConfig(**kw)
    return _check(cfg)


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: not valid JSON ({e.msg} at line {e.lineno})") from None
    return config_from_dict(doc)


def _check(cfg: ExperimentConfig) -> ExperimentConfig:
    if not cfg.p > 1:
        raise ConfigError("p: p must exceed 1")
    if not cfg.delta > 0:
        raise ConfigError("delta: must be positive")
    if cfg.lam is not None and not cfg.lam > 0:
        raise ConfigError("lam: must be positive")
    if not 0 < cfg.tail_fraction <= 1:
        raise ConfigError("tail_fraction: must lie in (0, 1]")
    for i, q in enumerate(cfg.p_values):
        if not q > 1:
            raise ConfigError(f"p_values[{i}]: p must exceed 1")
    for i, q in enumerate(cfg.delta_values):
        if not q > 0:
            raise ConfigError(f"delta_values[{i}]: must be positive")
    for i, q in enumerate(cfg.deltas):
        if not q > 0:
            raise ConfigError(f"deltas[{i}]: must be positive")
    if cfg.mode == "uniform" and cfg.g is None:
        raise ConfigError("g: required for uniform mode")
    if cfg.g is not None and not cfg.g > 0:
        raise ConfigError("g: must be positive")
    if cfg.mode == "sweep" and cfg.sweep_kind == "uniform" and cfg.g is None:
        raise ConfigError("g: required for a uniform sweep")
    if cfg.exact and not float(cfg.p).is_integer():
        raise ConfigError("p: rational arithmetic needs an integer exponent")
    warnings = []
    if cfg.mode == "run" and cfg.p > kato_exponent(cfg.d):
        warnings.append(f"p={float(cfg.p)} exceeds (d+1)/(d-1)={kato_exponent(cfg.d)} for d={cfg.d}")
    return replace(cfg, warnings=tuple(warnings))


def with_overrides(cfg_doc: dict, overrides: dict) -> dict:
    """Merge overrides into a raw document; dotted keys address initial_data."""
    doc = json.loads(json.dumps(cfg_doc))
    for key, val in overrides.items():
        if "." in key:
            head, sub = key.split(".", 1)
            if head != "initial_data":
                raise ConfigError(f"{key}: only initial_data has nested keys")
            doc.setdefault("initial_data", {})
            if not isinstance(doc["initial_data"], dict):
                raise ConfigError("initial_data: expected an object")
            doc["initial_data"][sub] = val
        else:
            doc[key] = val
    return doc
