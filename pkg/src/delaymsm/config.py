"""Single configuration file driving all CLI commands.

Unknown keys are fatal (reported with their full key path) so that typos
never silently fall back to defaults. Precedence: CLI flag > environment
variable > config file.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .states import StateSpace, default_four_state, default_three_state

WORKSPACE_ENV = "DELAYMSM_WORKSPACE"

_SCHEMA = {
    "workspace": None,
    "delimiter": None,
    "seed": None,
    "no_timestamp": None,
    "stratify": None,
    "covariates": None,
    "cox_models": None,
    "covariate_scale_per100": None,
    "horizons": None,
    "rounding_grain_pct": None,
    "tau_max": None,
    "elos_method": None,
    "paths": {
        "stops": None, "weather": None, "frequency": None,
        "stations": None, "output": None,
    },
    "state_space": {"thresholds": None, "adjacent_only": None},
    "bootstrap": {"replications": None, "seed": None},
}

DEFAULT_COVARIATES = ("boarded", "alighted", "trains_per_hour", "adverse_weather")


def _check_keys(raw: dict, schema: dict, prefix: str = "") -> None:
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown configuration key: {path}")
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"configuration key {path} must be a mapping")
            _check_keys(value, sub, prefix=f"{path}.")


@dataclass
class Config:
    workspace: Path
    delimiter: str = ","
    seed: int = 0
    no_timestamp: bool = False
    stratify: str = "time_slot"            # none | time_slot | zone
    covariates: tuple = DEFAULT_COVARIATES
    cox_models: tuple = ("temporal", "spatial")
    covariate_scale_per100: bool = False
    horizons: tuple = (10.0, 30.0)
    rounding_grain_pct: float = 5.0
    tau_max: float = 130.0
    elos_method: str = "sojourn"
    thresholds: tuple = (5.0, 10.0)
    adjacent_only: bool = False
    bootstrap_replications: int = 1000
    bootstrap_seed: int = 0
    paths: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def state_space(self) -> StateSpace:
        if list(self.thresholds) == [5.0, 10.0]:
            return default_three_state(adjacent=self.adjacent_only)
        if list(self.thresholds) == [5.0, 10.0, 15.0]:
            return default_four_state(adjacent=self.adjacent_only)
        raise ConfigError(f"unsupported thresholds: {self.thresholds}")

    def path(self, name: str) -> Path:
        if name not in self.paths:
            raise ConfigError(f"configuration key paths.{name} is required")
        return self.workspace / self.paths[name]

    def output_dir(self) -> Path:
        out = self.workspace / self.paths.get("output", "out")
        out.mkdir(parents=True, exist_ok=True)
        return out

    def sha256(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path, workspace_override: str | None = None) -> Config:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: configuration must be a mapping")
    _check_keys(raw, _SCHEMA)

    workspace = (
        workspace_override
        or os.environ.get(WORKSPACE_ENV)
        or raw.get("workspace", ".")
    )
    state_space = raw.get("state_space", {})
    bootstrap = raw.get("bootstrap", {})
    cfg = Config(
        workspace=Path(workspace),
        delimiter=raw.get("delimiter", ","),
        seed=int(raw.get("seed", 0)),
        no_timestamp=bool(raw.get("no_timestamp", False)),
        stratify=raw.get("stratify", "time_slot"),
        covariates=tuple(raw.get("covariates", DEFAULT_COVARIATES)),
        cox_models=tuple(raw.get("cox_models", ("temporal", "spatial"))),
        covariate_scale_per100=bool(raw.get("covariate_scale_per100", False)),
        horizons=tuple(float(h) for h in raw.get("horizons", (10, 30))),
        rounding_grain_pct=float(raw.get("rounding_grain_pct", 5)),
        tau_max=float(raw.get("tau_max", 130)),
        elos_method=raw.get("elos_method", "sojourn"),
        thresholds=tuple(float(t) for t in state_space.get("thresholds", (5, 10))),
        adjacent_only=bool(state_space.get("adjacent_only", False)),
        bootstrap_replications=int(bootstrap.get("replications", 1000)),
        bootstrap_seed=int(bootstrap.get("seed", 0)),
        paths=dict(raw.get("paths", {})),
        raw=raw,
    )
    if cfg.stratify not in ("none", "time_slot", "zone"):
        raise ConfigError(f"stratify must be none|time_slot|zone, got {cfg.stratify!r}")
    if cfg.elos_method not in ("sojourn", "occupancy"):
        raise ConfigError(f"elos_method must be sojourn|occupancy, got {cfg.elos_method!r}")
    for model in cfg.cox_models:
        if model not in ("temporal", "spatial"):
            raise ConfigError(f"cox_models entries must be temporal|spatial, got {model!r}")
    return cfg
