"""Run configuration: strict TOML parsing and serialisation.

Top-level keys are the pipeline knobs plus ``scenario`` and ``seed``;
``[mom]`` holds the map-metric parameters, ``[simulation]`` the world and
motion, and each ``[[sensors]]`` table one sensor. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import tomli_w

from .core import SensorKind, SensorSpec
from .errors import ConfigError
from .metrics import MomParams
from .pipeline import PipelineConfig, Scenario
from .simgen import MotionProfile, ScanGeometry, WorldModel, default_sensors

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class SimConfig:
    duration: float = 8.0
    regime: str = "constant_speed"
    # optional list of (regime, duration) legs; overrides regime/duration
    legs: tuple = ()
    curvature: float = 0.05
    start: tuple = (-8.0, 0.0, 0.0)
    room: tuple = (20.0, 6.0, 3.0)
    elevation_min_deg: float = -25.0
    elevation_max_deg: float = 15.0
    mount_height: float = 1.0
    continuous_gaps: tuple = ()
    # scales injected noise; declared covariances are unchanged, 0 gives exact data
    noise_scale: float = 1.0

    def profile(self) -> MotionProfile:
        if self.legs:
            return MotionProfile.chain(self.legs, curvature=self.curvature, start=tuple(self.start))
        return MotionProfile.of(self.regime, self.duration, curvature=self.curvature, start=tuple(self.start))

    def world(self) -> WorldModel:
        return WorldModel.room(*self.room)

    def geometry(self) -> ScanGeometry:
        return ScanGeometry(self.elevation_min_deg, self.elevation_max_deg, self.mount_height)


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario = Scenario.MOM
    seed: int = 0
    pipeline: PipelineConfig = PipelineConfig()
    simulation: SimConfig = SimConfig()
    sensors: tuple = field(default_factory=lambda: tuple(default_sensors()))


_SENSOR_KEYS = {"id": "sensor_id"}


def _check_keys(table: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _coerce(value: Any, default: Any, where: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be an array")
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _fill(cls, table: dict, where: str, skip: tuple = ()):
    names = {f.name: f for f in dataclasses.fields(cls) if f.name not in skip}
    _check_keys(table, set(names), where)
    defaults = cls()
    kwargs = {}
    for key, value in table.items():
        default = getattr(defaults, key)
        if key == "consistency_gate":
            if value is False:
                kwargs[key] = None
                continue
            default = 0.0
        kwargs[key] = _coerce(value, default, f"{where}.{key}")
    return kwargs


def _sensor(table: dict, i: int) -> SensorSpec:
    where = f"sensors[{i}]"
    names = {f.name for f in dataclasses.fields(SensorSpec)} - {"sensor_id"} | {"id"}
    _check_keys(table, names, where)
    if "id" not in table or "kind" not in table or "period" not in table:
        raise ConfigError(f"{where} needs id, kind and period")
    defaults = SensorSpec("x", SensorKind.GPS, 1.0)
    kwargs = {}
    for key, value in table.items():
        name = _SENSOR_KEYS.get(key, key)
        if name in ("sensor_id", "kind"):
            kwargs[name] = str(value)
            continue
        kwargs[name] = _coerce(value, getattr(defaults, name), f"{where}.{key}")
    try:
        kwargs["kind"] = SensorKind(kwargs["kind"])
        return SensorSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    data = dict(data)
    top = {f.name for f in dataclasses.fields(PipelineConfig)} - {"mom"}
    _check_keys(data, top | {"scenario", "seed", "mom", "simulation", "sensors"}, "config")
    try:
        scenario = Scenario.parse(data.pop("scenario", Scenario.MOM.value))
    except ValueError as exc:
        raise ConfigError(f"config.scenario: {exc}") from exc
    seed = _coerce(data.pop("seed", 0), 0, "config.seed")
    mom = MomParams(**_fill(MomParams, data.pop("mom", {}), "mom"))
    sim = SimConfig(**_fill(SimConfig, data.pop("simulation", {}), "simulation"))
    sensor_tables = data.pop("sensors", None)
    sensors = tuple(default_sensors()) if sensor_tables is None else tuple(
        _sensor(t, i) for i, t in enumerate(sensor_tables)
    )
    ids = [s.sensor_id for s in sensors]
    if len(set(ids)) != len(ids):
        raise ConfigError("sensor ids must be unique")
    pipe = PipelineConfig(mom=mom, **_fill(PipelineConfig, data, "config", skip=("mom",)))
    if pipe.workers < 1 or pipe.n_max < 1 or pipe.window_seconds <= 0:
        raise ConfigError("workers, n_max and window_seconds must be positive")
    return RunConfig(scenario, seed, pipe, sim, sensors)


def load_config(path: Optional[str | Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "rb") as fh:
            return parse_config(tomllib.load(fh))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _plain(value: Any) -> Any:
    if isinstance(value, (Scenario, SensorKind)):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, float):
        return float(value)
    return value


def config_dict(cfg: RunConfig, execution: bool = True) -> dict:
    """Plain mapping that ``parse_config`` accepts.

    ``execution=False`` leaves out knobs that cannot change results
    (worker count), so the mapping can go into reproducible artifacts.
    """
    out: dict = {"scenario": cfg.scenario.value, "seed": cfg.seed}
    for f in dataclasses.fields(PipelineConfig):
        if f.name == "mom" or (f.name == "workers" and not execution):
            continue
        value = getattr(cfg.pipeline, f.name)
        out[f.name] = False if value is None else _plain(value)
    out["mom"] = {f.name: _plain(getattr(cfg.pipeline.mom, f.name)) for f in dataclasses.fields(MomParams)}
    out["simulation"] = {
        f.name: _plain(getattr(cfg.simulation, f.name)) for f in dataclasses.fields(SimConfig)
    }
    sensors = []
    for s in cfg.sensors:
        row = {"id": s.sensor_id, "kind": s.kind.value}
        for f in dataclasses.fields(SensorSpec):
            if f.name not in ("sensor_id", "kind"):
                row[f.name] = _plain(getattr(s, f.name))
        sensors.append(row)
    out["sensors"] = sensors
    return out


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_dict(cfg))
