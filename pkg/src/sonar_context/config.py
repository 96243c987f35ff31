"""Run configuration: one JSON document with a section per module.

Unknown keys are rejected and every value is re-validated by the owning
module's config class; errors name the offending dotted key.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError, SonarContextError
from .evaluation import EvalConfig
from .matching import MatchConfig
from .points import PointConfig
from .polar_image import SensorModel
from .registration import IcpConfig
from .retrieval import RetrievalConfig
from .simulator import NoiseConfig, WorldConfig

CONFIG_VERSION = 1


@dataclass(frozen=True)
class DescriptorConfig:
    p_w: int = 4
    p_h: int = 4

    def __post_init__(self):
        if self.p_w < 1 or self.p_h < 1:
            raise ConfigError("patch sizes must be >= 1")


@dataclass(frozen=True)
class PoseGraphConfig:
    max_iter: int = 100
    tol: float = 1e-9
    huber_delta: Optional[float] = None
    odom_sigma_trans_per_m: float = 0.02
    odom_sigma_yaw_per_rad: float = 0.005
    odom_sigma_trans_floor_m: float = 1e-3
    odom_sigma_yaw_floor_rad: float = 1e-4

    def __post_init__(self):
        if self.max_iter < 1 or self.tol <= 0:
            raise ConfigError("max_iter must be >= 1 and tol > 0")
        if self.huber_delta is not None and self.huber_delta <= 0:
            raise ConfigError("huber_delta must be positive when set")
        if min(self.odom_sigma_trans_per_m, self.odom_sigma_yaw_per_rad) < 0:
            raise ConfigError("odometry sigmas must be >= 0")
        if min(self.odom_sigma_trans_floor_m, self.odom_sigma_yaw_floor_rad) <= 0:
            raise ConfigError("odometry sigma floors must be > 0")


@dataclass(frozen=True)
class RouteConfig:
    radius_m: float = 40.0
    frames_per_lap: int = 200
    laps: int = 2
    revisit_yaw_deg: float = 0.0
    revisit_lateral_m: float = 0.0
    revisit_forward_m: float = 0.0
    arc_fraction: float = 1.0
    dt_s: float = 1.0
    sigma_trans_per_m: float = 0.02
    sigma_yaw_per_rad: float = 0.005

    def __post_init__(self):
        if self.radius_m <= 0 or self.frames_per_lap < 2 or self.laps < 1 or self.dt_s <= 0:
            raise ConfigError("route needs radius_m > 0, frames_per_lap >= 2, laps >= 1, dt_s > 0")
        if not (0 < self.arc_fraction <= 1):
            raise ConfigError("arc_fraction must be in (0, 1]")


@dataclass(frozen=True)
class SimulationConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    route: RouteConfig = field(default_factory=RouteConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    scenario_file: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    seed: int = 0
    output: str = "out"
    dataset: Optional[str] = None
    workers: int = 1
    sensor: SensorModel = field(default_factory=SensorModel)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    matching: MatchConfig = field(default_factory=MatchConfig)
    points: PointConfig = field(default_factory=PointConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)
    posegraph: PoseGraphConfig = field(default_factory=PoseGraphConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @property
    def dataset_dir(self) -> Path:
        return Path(self.dataset) if self.dataset else Path(self.output) / "dataset"

    @property
    def run_dir(self) -> Path:
        return Path(self.output) / "run"

    @property
    def eval_dir(self) -> Path:
        return Path(self.output) / "eval"

    def to_dict(self) -> Dict[str, Any]:
        return _to_dict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, tuple):
        return [_to_dict(v) for v in obj]
    return obj


def _coerce(value, default, key: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key}: expected an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        return tuple(value)
    return value


def _build(cls, data: Dict[str, Any], prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    defaults = cls()
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in known:
            raise ConfigError(f"unknown config key {path!r}")
        default = getattr(defaults, key)
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, path)
        elif value is None:
            kwargs[key] = None
        else:
            kwargs[key] = _coerce(value, default, path)
    try:
        return cls(**kwargs)
    except ConfigError as e:
        raise ConfigError(f"{prefix or 'config'}: {e}") from None
    except (SonarContextError, ValueError, TypeError) as e:
        # name the first offending key when the message mentions it
        msg = str(e)
        bad = next((k for k in kwargs if k in msg.split()[0:3] or msg.startswith(k)), None)
        where = f"{prefix}.{bad}" if prefix and bad else (bad or prefix or "config")
        raise ConfigError(f"invalid value for {where!r}: {msg}") from None


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r} (expected {CONFIG_VERSION})")
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return config_from_dict(data)


def apply_overrides(cfg: RunConfig, seed: Optional[int] = None, output: Optional[str] = None,
                    dataset: Optional[str] = None) -> RunConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if output is not None:
        changes["output"] = str(output)
    if dataset is not None:
        changes["dataset"] = str(dataset)
    return cfg.replace(**changes) if changes else cfg


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def route_tuple(r: RouteConfig) -> Tuple:
    return dataclasses.astuple(r)
