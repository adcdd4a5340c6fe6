"""
Configuration management for the scale recovery tools
"""
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from dotenv import dotenv_values
from pydantic import ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from pythonjsonlogger import jsonlogger

from shared.aggregation import FilterConfig
from shared.errors import ConfigError
from shared.geometry_core import DEFAULT_CATEGORY, CameraIntrinsics, CameraPose, VehiclePrior
from shared.scale_pipeline import ScaleEstimator, orthophoto_estimator

ENV_PREFIX = "SCALE_"
CONFIG_PATH_ENV = "SCALE_RECOVERY_CONFIG"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
LOG_HANDLER_NAME = "scale-recovery"


class RunConfig(BaseSettings):
    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, env_file=".env", extra="ignore", case_sensitive=False)

    # Camera
    focal_px: float = 1000.0
    fx: Optional[float] = None
    fy: Optional[float] = None
    cx: Optional[float] = None
    cy: Optional[float] = None
    image_width: int = 320
    image_height: int = 240
    pitch_deg: float = -90.0

    # Anchor prior
    vehicle_length_m: float = 4.4
    vehicle_width_m: float = 1.9
    vehicle_height_m: float = 1.6

    # Filtering
    conf_threshold: float = 0.5
    min_count: int = 5
    categories: str = DEFAULT_CATEGORY

    # Crops
    gsd_sat: Optional[float] = None

    orthophoto_mode: bool = False
    seed: int = 0
    fd_rel_tolerance: float = 0.02

    # Runtime
    log_level: str = "INFO"
    log_json: bool = False
    workers: int = 1

    @field_validator("focal_px", "vehicle_length_m", "vehicle_width_m")
    @classmethod
    def positive(cls, v, info):
        if not v > 0:
            raise ValueError(f"{info.field_name} must be positive, got {v}")
        return v

    @field_validator("fx", "fy", "gsd_sat")
    @classmethod
    def positive_if_set(cls, v, info):
        if v is not None and not v > 0:
            raise ValueError(f"{info.field_name} must be positive, got {v}")
        return v

    @field_validator("image_width", "image_height", "workers")
    @classmethod
    def at_least_one(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1, got {v}")
        return v

    @field_validator("pitch_deg")
    @classmethod
    def downward_pitch(cls, v):
        if not (-180.0 < v < 0.0):
            raise ValueError(f"pitch_deg must lie in (-180, 0), got {v}")
        return v

    @field_validator("vehicle_height_m", "seed")
    @classmethod
    def non_negative(cls, v, info):
        if v < 0:
            raise ValueError(f"{info.field_name} must be >= 0, got {v}")
        return v

    @field_validator("conf_threshold")
    @classmethod
    def unit_interval(cls, v):
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"conf_threshold must lie in [0, 1], got {v}")
        return v

    @field_validator("fd_rel_tolerance")
    @classmethod
    def small_tolerance(cls, v):
        if not (0.0 < v < 1.0):
            raise ValueError(f"fd_rel_tolerance must lie in (0, 1), got {v}")
        return v

    @field_validator("min_count")
    @classmethod
    def min_count_range(cls, v):
        if v < 1:
            raise ValueError(f"min_count must be >= 1, got {v}")
        return v

    @field_validator("categories", mode="before")
    @classmethod
    def parse_categories(cls, v):
        if isinstance(v, (list, tuple)):
            v = ",".join(str(c) for c in v)
        names = [c.strip().lower() for c in str(v).split(",") if c.strip()]
        if not names:
            raise ValueError("at least one category is required")
        return ",".join(names)

    @field_validator("log_level")
    @classmethod
    def known_level(cls, v):
        level = str(v).upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"log_level must be one of {LOG_LEVELS}, got {v}")
        return level

    @model_validator(mode="after")
    def camera_is_valid(self):
        if self.vehicle_length_m <= self.vehicle_width_m:
            raise ValueError("vehicle_length_m must exceed vehicle_width_m")
        # builds and discards the camera so bad combinations surface at load time
        self.intrinsics()
        self.pose()
        return self

    @property
    def category_list(self) -> List[str]:
        return self.categories.split(",")

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.fx if self.fx is not None else self.focal_px,
            fy=self.fy if self.fy is not None else self.focal_px,
            cx=self.cx if self.cx is not None else self.image_width / 2.0,
            cy=self.cy if self.cy is not None else self.image_height / 2.0,
            image_width=self.image_width,
            image_height=self.image_height,
        )

    def pose(self) -> CameraPose:
        if self.orthophoto_mode:
            return CameraPose()
        return CameraPose.from_degrees(self.pitch_deg)

    def prior(self) -> VehiclePrior:
        prior = VehiclePrior(self.vehicle_length_m, self.vehicle_width_m, self.vehicle_height_m)
        return prior.without_height() if self.orthophoto_mode else prior

    def filter_config(self) -> FilterConfig:
        return FilterConfig(conf_threshold=self.conf_threshold, min_count=self.min_count)

    def estimator(self) -> ScaleEstimator:
        if self.orthophoto_mode:
            return orthophoto_estimator(self.intrinsics(), self.prior(), self.filter_config())
        return ScaleEstimator(self.intrinsics(), self.pose(), self.prior(), self.filter_config())


def _normalize_key(key: str) -> str:
    key = key.strip().lower()
    prefix = ENV_PREFIX.lower()
    return key[len(prefix):] if key.startswith(prefix) else key


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """KEY=VALUE file; keys are RunConfig field names with or without the SCALE_ prefix"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        values = dotenv_values(path, encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"Config file {path.name} is not UTF-8 text (byte {e.start})") from e
    known = set(RunConfig.model_fields)
    parsed = {}
    for key, value in values.items():
        name = _normalize_key(key)
        if name not in known:
            raise ConfigError(f"Unknown config key '{key}' in {path.name}")
        if value is None or value == "":
            continue
        parsed[name] = value
    return parsed


def _env_keys() -> set:
    keys = {k for k in os.environ if k.upper().startswith(ENV_PREFIX)}
    if Path(".env").is_file():
        keys |= {k for k in dotenv_values(".env") if k.upper().startswith(ENV_PREFIX)}
    return {_normalize_key(k) for k in keys}


def load_run_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Tuple[RunConfig, Dict[str, str]]:
    """
    Resolve the run configuration.

    Precedence: overrides (CLI flags) > config file > SCALE_* environment > defaults.
    Returns the config and a provenance map naming the source of every field.
    """
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    unknown = set(overrides) - set(RunConfig.model_fields)
    if unknown:
        raise ConfigError(f"Unknown config override(s): {sorted(unknown)}")

    if config_path is None:
        config_path = os.environ.get(CONFIG_PATH_ENV) or None
    file_values = read_config_file(config_path) if config_path else {}

    try:
        config = RunConfig(**{**file_values, **overrides})
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid configuration: {details}") from e

    env_keys = _env_keys()
    provenance = {}
    for name in RunConfig.model_fields:
        if name in overrides:
            provenance[name] = "flag"
        elif name in file_values:
            provenance[name] = "file"
        elif name in env_keys:
            provenance[name] = "env"
        else:
            provenance[name] = "default"
    return config, provenance


# Logging configuration
def setup_logging(level: str = "INFO", json_logs: bool = False) -> logging.Logger:
    """Configure the root logger once, as plain text or JSON lines on stderr"""
    handler = logging.StreamHandler(sys.stderr)
    handler.set_name(LOG_HANDLER_NAME)
    if json_logs:
        handler.setFormatter(jsonlogger.JsonFormatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        if existing.get_name() == LOG_HANDLER_NAME:
            root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(getattr(logging, level.upper(), logging.INFO))

    # Reduce noise from external libraries
    logging.getLogger('numexpr').setLevel(logging.WARNING)
    logging.getLogger('asyncio').setLevel(logging.WARNING)

    return logging.getLogger(__name__)
