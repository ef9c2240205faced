"""Run configuration: a single JSON file validated against a strict schema.

Only ``seed`` is required. Every other field has a default; unknown keys are
rejected. Relative paths are resolved against the directory of the config
file so that the effective configuration is location independent.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeInt, PositiveFloat, PositiveInt, ValidationError

from .data import SensorMode
from .errors import ConfigError
from .evaluation import DEFAULT_HORIZONS_S, model_seed
from .narx import DEFAULT_HIDDEN, NarxConfig
from .plant import PlantConfig

__all__ = ["RunConfig", "parse_config", "load_config", "dumps_config", "derive_seed"]

_PLANT = PlantConfig()


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlantSection(_Section):
    """Surrogate plant parameters; see ``fingernarx.plant.PlantConfig``."""

    x_max: PositiveFloat = _PLANT.x_max
    y_max: PositiveFloat = _PLANT.y_max
    z_max: PositiveFloat = _PLANT.z_max
    tau: PositiveFloat = _PLANT.tau
    hysteresis_gain: float = Field(_PLANT.hysteresis_gain, ge=0)
    hysteresis_width: PositiveFloat = _PLANT.hysteresis_width
    memory_weight: float = Field(_PLANT.memory_weight, ge=0, le=1)
    sensor_noise: float = Field(_PLANT.sensor_noise, ge=0)
    position_noise: float = Field(_PLANT.position_noise, ge=0)
    kappa: float = Field(_PLANT.kappa, ge=0)
    beta: float = Field(_PLANT.beta, ge=0, lt=1)
    saturation: PositiveFloat = _PLANT.saturation
    sensor_base: PositiveFloat = _PLANT.sensor_base
    amplitude_gain: PositiveFloat = _PLANT.amplitude_gain
    direction_gain: PositiveFloat = _PLANT.direction_gain

    def build(self, seed: int) -> PlantConfig:
        return PlantConfig(seed=seed, **self.model_dump())


class AcquisitionSection(_Section):
    duration_s: PositiveFloat = 1200.0
    sample_rate_hz: PositiveFloat = 25.0
    switch_rate_hz: PositiveFloat = 5.0
    speed_bound: PositiveFloat = 0.4
    train_fraction: float = Field(0.9, gt=0, lt=1)


class TrainingSection(_Section):
    delays: int = Field(3, ge=1)
    learning_rate: PositiveFloat = 1e-3
    batch_size: PositiveInt = 64
    epochs: PositiveInt = 300
    final_lr_fraction: float = Field(0.01, gt=0, le=1)


class ModelsSection(_Section):
    """Hidden layer sizes per sensor mode."""

    MA: tuple[PositiveInt, PositiveInt] = DEFAULT_HIDDEN[SensorMode.MA]
    MB: tuple[PositiveInt, PositiveInt] = DEFAULT_HIDDEN[SensorMode.MB]
    MC: tuple[PositiveInt, PositiveInt] = DEFAULT_HIDDEN[SensorMode.MC]


class EvaluationSection(_Section):
    horizons_s: tuple[PositiveFloat, ...] = DEFAULT_HORIZONS_S
    stride_s: PositiveFloat = 1.0
    speedup_runs: NonNegativeInt = Field(5, description="0 skips timing; otherwise at least 5 runs are taken")


class CalibrationSection(_Section):
    noise_px: float = Field(0.0, ge=0, description="Gaussian centroid noise for the synthesized mesh")


class PathsSection(_Section):
    """Inputs read by individual subcommands; outputs always go to ``--out``."""

    dataset: Optional[Path] = None
    calibration: Optional[Path] = None
    coefficients: Optional[Path] = None
    frames: Optional[Path] = None
    model: Optional[Path] = None
    predictions: Optional[Path] = None
    truth: Optional[Path] = None

    def resolved(self, base: Path) -> "PathsSection":
        updates = {k: (base / v).resolve() for k, v in self.model_dump().items() if v is not None}
        return self.model_copy(update=updates)


class RunConfig(_Section):
    seed: NonNegativeInt
    mode: SensorMode = SensorMode.MC
    plant: PlantSection = PlantSection()
    acquisition: AcquisitionSection = AcquisitionSection()
    training: TrainingSection = TrainingSection()
    models: ModelsSection = ModelsSection()
    evaluation: EvaluationSection = EvaluationSection()
    calibration: CalibrationSection = CalibrationSection()
    paths: PathsSection = PathsSection()

    def narx_config(self, mode: SensorMode | str) -> NarxConfig:
        mode = SensorMode(mode)
        t = self.training
        return NarxConfig(
            exo_dim=mode.exo_dim,
            hidden=tuple(getattr(self.models, mode.value)),
            delays=t.delays,
            learning_rate=t.learning_rate,
            epochs=t.epochs,
            batch_size=t.batch_size,
            final_lr_fraction=t.final_lr_fraction,
            seed=model_seed(self.seed, mode),
        )

    def narx_configs(self) -> dict[SensorMode, NarxConfig]:
        return {m: self.narx_config(m) for m in SensorMode}

    def plant_config(self) -> PlantConfig:
        return self.plant.build(derive_seed(self.seed, "plant"))


_STREAMS = {"actuation": 101, "plant": 102, "calibration": 103}


def derive_seed(seed: int, stream: str) -> int:
    """Independent seed per random stream, all derived from the run seed."""
    return int(np.random.SeedSequence([seed, _STREAMS[stream]]).generate_state(1)[0])


def _describe(err: ValidationError) -> str:
    first = err.errors()[0]
    where = ".".join(str(p) for p in first["loc"]) or "<root>"
    if first["type"] == "extra_forbidden":
        return f"unknown key '{where}'"
    if first["type"] == "missing":
        return f"missing required field '{where}'"
    return f"field '{where}': {first['msg']} (got {first.get('input')!r})"


def load_config(data: dict, base: Path | None = None) -> RunConfig:
    """Validate a decoded config mapping."""
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_describe(err)) from None
    try:
        cfg.plant_config()
    except ValueError as err:
        raise ConfigError(f"field 'plant': {err}") from None
    if base is not None:
        cfg = cfg.model_copy(update={"paths": cfg.paths.resolved(base)})
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return load_config(data, path.resolve().parent)


def dumps_config(cfg: RunConfig) -> str:
    """Effective configuration with every default filled in."""
    return json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def schema_summary() -> str:
    """One line per field with its default, for ``--help``."""
    lines = []

    def walk(model: type[BaseModel], prefix: str):
        for name, info in model.model_fields.items():
            ann = info.annotation
            if isinstance(ann, type) and issubclass(ann, BaseModel):
                walk(ann, f"{prefix}{name}.")
                continue
            default = "required" if info.is_required() else json.dumps(_jsonable(info.default))
            lines.append(f"  {prefix}{name} = {default}")

    walk(RunConfig, "")
    return "\n".join(lines)


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, SensorMode):
        return v.value
    return v
