"""Run configuration loaded from TOML.

Model keys live at the top level (or in a ``[model]`` table); schedule,
sweep, extended-system and output settings live in their own tables.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .normal_form import ModelParams

__all__ = ["ConfigError", "RunConfig", "ScheduleConfig", "SweepConfig", "ExtendedConfig",
           "load_config", "MODEL_KEYS", "EXTENDED_KEYS"]

MODEL_KEYS = ("epsilon", "sigma", "tau", "upsilon", "k", "n", "m", "lambda_minus", "lambda_plus",
              "mu_minus", "mu_plus", "T_minus", "T_plus", "C", "R", "R_prime", "delta_s", "delta_u",
              "N_plus", "N_minus", "nu", "nu_prime", "omega_prime", "seed")
EXTENDED_KEYS = ("L", "ell1", "ell2", "xi_star", "C_ext")
OPTIONAL_MODEL_KEYS = ("A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4", "jump_radius", "omega",
                       "theta_speed")


class ConfigError(ValueError):
    """Malformed or incomplete configuration (a usage error)."""


@dataclass
class ScheduleConfig:
    leaves: int = 2
    eta: float = 0.3
    slack_floor: float = 0.05
    beam_width: int = 4
    depth: int = 60
    tol: float = 1e-9
    leaf_start: float = 0.05
    leaf_spacing: Optional[float] = None   # default eps^upsilon / 10
    q0: float = 0.0
    samples: int = 9
    verify: bool = True
    # overrides of LinkConstants fields (e.g. C, headroom)
    constants: dict = field(default_factory=dict)


@dataclass
class SweepConfig:
    epsilon_list: list = field(default_factory=list)
    drift_leaves: int = 2


@dataclass
class ExtendedConfig:
    a_star: float = 0.01
    K_cap: float = 2.0


@dataclass
class RunConfig:
    model: ModelParams
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    extended: ExtendedConfig = field(default_factory=ExtendedConfig)
    output: dict = field(default_factory=dict)
    seed: int = 0
    source: Optional[str] = None
    raw: dict = field(default_factory=dict)

    @property
    def linear_twist(self) -> bool:
        return self.model.R == 0.0

    def leaf_positions(self, epsilon: Optional[float] = None, leaves: Optional[int] = None) -> list:
        eps = self.model.epsilon if epsilon is None else epsilon
        sc = self.schedule
        n = sc.leaves if leaves is None else leaves
        sp = sc.leaf_spacing if sc.leaf_spacing is not None else 0.1 * eps ** self.model.upsilon
        return [[sc.leaf_start + sp * j] * self.model.n for j in range(n)]

    def config_hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _coerce(key, v):
    if key in ("xi_star", "omega") and v is not None:
        return tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v]))
    return v


def _take(table: dict, cls, where: str):
    names = {f.name for f in fields(cls)}
    extra = set(table) - names
    if extra:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(extra)}")
    return cls(**table)


def from_dict(raw: dict, source: Optional[str] = None, require_model: bool = True) -> RunConfig:
    raw = dict(raw)
    tables = {k: raw.pop(k) for k in ("schedule", "sweep", "extended", "output") if k in raw}
    model = dict(raw.pop("model", {}))
    model.update(raw)
    missing = [k for k in MODEL_KEYS if k not in model]
    if require_model and missing:
        raise ConfigError(f"missing model keys: {missing}")
    allowed = set(MODEL_KEYS) | set(EXTENDED_KEYS) | set(OPTIONAL_MODEL_KEYS)
    extra = set(model) - allowed
    if extra:
        raise ConfigError(f"unknown model keys: {sorted(extra)}")
    try:
        mp = ModelParams(**{k: _coerce(k, v) for k, v in model.items()})
        sched = _take(dict(tables.get("schedule", {})), ScheduleConfig, "schedule")
        sweep = _take(dict(tables.get("sweep", {})), SweepConfig, "sweep")
        ext = _take(dict(tables.get("extended", {})), ExtendedConfig, "extended")
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    if not sched.eta > 0:
        raise ConfigError("eta must be positive")
    if sched.leaves < 1:
        raise ConfigError("leaves must be at least 1")
    for e in sweep.epsilon_list:
        if not (isinstance(e, (int, float)) and 0 < e <= 0.5 and math.isfinite(e)):
            raise ConfigError(f"epsilon_list entry {e!r} outside (0, 0.5]")
    full = {"model": model} | {k: v for k, v in tables.items()}
    return RunConfig(mp, sched, sweep, ext, dict(tables.get("output", {})), int(model.get("seed", 0)),
                     source, full)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"cannot parse {p}: {e}") from e
    return from_dict(raw, str(p))

