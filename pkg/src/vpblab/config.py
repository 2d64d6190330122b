"""Flat key=value run configuration shared by the CLI, service, and harness.

Files look like

    # comment
    modes = 64
    epsilon = 0.25
    epsilons = 0.5, 0.25, 0.125, 0.0625
    collisions = true
    out = runs/demo

Unknown keys are rejected.  The same settings object drives single kinetic
runs, fluid runs, and epsilon sweeps.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

_BOOL = {"true": True, "1": True, "yes": True, "on": True,
         "false": False, "0": False, "no": False, "off": False}


@dataclass
class Settings:
    # velocity-space discretization
    K: int = 4
    quad_order: int = 16
    cross_section: float = 1.0
    rule_scale: float = 1.0
    # spatial discretization
    x_dims: int = 1
    modes: int = 64
    domain_length: float = 2.0 * math.pi
    # time integration
    epsilon: float = 0.25
    dt: float = 1.0e-3
    t_final: float = 0.1
    scheme: str = "imex1"
    snapshot_every: int = 10
    # kinetic model switches
    nonlinearity: str = "species"
    collisions: bool = True
    fields: bool = True
    picard: bool = False
    picard_tol: float = 1.0e-11
    picard_max_iters: int = 60
    init_completion: str = "minimal"
    blowup_factor: float = 1.0e3
    n_diag: int = 2
    # initial profile
    profile: str = "default"
    amplitude: float = 1.0e-2
    mean_flow: float = 0.5e-2
    # sweep
    epsilons: tuple = (0.5, 0.25, 0.125, 0.0625)
    error_sobolev_index: int = 1
    # execution
    threads: int = 1
    out: str = "runs"
    cache: str = ""

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low not in _BOOL:
                raise ValueError(f"expected boolean, got {raw!r}")
            return _BOOL[low]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind is tuple:
            return tuple(float(tok) for tok in raw.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad value for {name!r}: {exc}") from exc
    raise ConfigError(f"unsupported option type for {name!r}")


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = stripped.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def settings_from_mapping(raw: dict, base: Settings | None = None) -> Settings:
    settings = base if base is not None else Settings()
    known = {f.name: f.type for f in fields(Settings)}
    types = {
        "K": int, "quad_order": int, "cross_section": float, "rule_scale": float,
        "x_dims": int, "modes": int, "domain_length": float,
        "epsilon": float, "dt": float, "t_final": float, "scheme": str,
        "snapshot_every": int, "nonlinearity": str, "collisions": bool,
        "fields": bool, "picard": bool, "picard_tol": float,
        "picard_max_iters": int, "init_completion": str, "blowup_factor": float,
        "n_diag": int, "profile": str, "amplitude": float, "mean_flow": float,
        "epsilons": tuple, "error_sobolev_index": int, "threads": int,
        "out": str, "cache": str,
    }
    for key, raw_val in raw.items():
        if key not in known:
            raise ConfigError(f"unknown configuration key {key!r}")
        value = raw_val if not isinstance(raw_val, str) else _coerce(key, types[key], raw_val)
        setattr(settings, key, value)
    return settings


def load_settings(path: str | Path | None, overrides: dict | None = None) -> Settings:
    settings = Settings()
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        settings = settings_from_mapping(parse_config_text(text), settings)
    if overrides:
        settings = settings_from_mapping(overrides, settings)
    return settings
