#!/usr/bin/env python3
"""
File: Configuration.py
Path: ClassroomPeers/Source/Core/Configuration.py
Standard: AIDEV-PascalCase-1.8
Created: 2026-10-18
Author: Project Himalaya
Description: Configuration models and loader for ClassroomPeers

Purpose: Validated configuration for the estimator, the data generating process
and the runtime environment. Values come from Config/<Env>/config.json, then
environment variables (CLASSROOMPEERS_*), then command line overrides.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .Errors import ConfigurationError

CONFIG_ROOT = Path(__file__).resolve().parents[2] / "Config"


def ConfigPathForEnvironment(Environment: str) -> Path:
    """Config/<Env>/config.json, e.g. testing -> Config/Testing/config.json"""
    return CONFIG_ROOT / Environment.strip().capitalize() / "config.json"


class EstimatorConfig(BaseModel):
    """Options of the two-step / efficient GMM pipeline"""

    model_config = ConfigDict(extra="forbid")

    k_rho: float = Field(0.99, gt=0.0, lt=1.0)
    k_f: float = Field(100.0, gt=0.0)
    k_x: float = Field(1e6, gt=0.0)
    k_gamma: float = Field(1e6, gt=1.0)
    a_choice: Literal["M", "MtM"] = "M"
    instrument: str = "const"
    missing_policy: Literal["adjusted", "drop_classroom", "fail"] = "adjusted"
    missing_transform: Literal["omega_obs", "restricted"] = "omega_obs"
    max_iter: int = Field(500, ge=1)
    tol: float = Field(1e-8, gt=0.0)
    grid_points: int = Field(512, ge=8)
    weak_instrument_tol: float = Field(1e-6, gt=0.0)
    het_by: str = "class_type"
    het_types: Dict[str, str] = Field(default_factory=dict)
    fixed_effects: List[Literal["school", "classtype"]] = Field(default_factory=list)
    efficient: bool = True
    cluster_se: bool = False

    @field_validator("instrument")
    @classmethod
    def _CheckInstrument(cls, Value: str) -> str:
        if Value == "const" or (Value.startswith("col:") and len(Value) > 4):
            return Value
        raise ValueError("instrument must be 'const' or 'col:<name>'")


class CalibrationTargets(BaseModel):
    """Raw-score moments the simulator should reproduce"""

    model_config = ConfigDict(extra="forbid")

    mean1: float = 485.377
    sd1: float = 47.698
    mean2: float = 436.725
    sd2: float = 31.706


class DgpConfig(BaseModel):
    """Data generating process of the simulator"""

    model_config = ConfigDict(extra="forbid")

    num_classrooms: int = Field(300, ge=1)
    size_min: int = Field(15, ge=2)
    size_max: int = Field(25, ge=2)
    classes_per_school: int = Field(4, ge=1)
    num_types: int = Field(2, ge=1)
    type_rule: Literal["random", "by_size"] = "random"
    type_shares: Optional[List[float]] = None
    rho0: float = Field(0.4, gt=-1.0, lt=1.0)
    f10: float = 1.0
    f20: float = 1.0
    beta_class: List[List[float]] = Field(default_factory=lambda: [[0.5], [0.3]])
    beta_student: List[List[float]] = Field(default_factory=lambda: [[1.0, 0.5], [0.6, 0.2]])
    sigma1: float = Field(1.0, gt=0.0)
    sigma2: float = Field(1.0, gt=0.0)
    type_scales: Optional[List[float]] = None
    alpha_mean: float = 50.0
    alpha_sd: float = Field(1.0, ge=0.0)
    kappa_loading: float = 1.0
    kappa_girl: float = 0.5
    kappa_noise_sd: float = Field(0.5, ge=0.0)
    school_sd: float = Field(1.0, ge=0.0)
    selection: Literal["random", "sorted_by_kappa", "school_stratified"] = "random"
    missing_rate: float = Field(0.0, ge=0.0, lt=1.0)
    calibrate_raw_scores: Optional[CalibrationTargets] = None
    identical_noise: bool = False
    seed: int = 20260101

    @field_validator("f20")
    @classmethod
    def _CheckNormalization(cls, Value: float) -> float:
        if Value != 1.0:
            raise ValueError("f20 is normalized to 1")
        return Value

    @model_validator(mode="after")
    def _CheckShapes(self) -> "DgpConfig":
        if self.size_max < self.size_min:
            raise ValueError("size_max must be >= size_min")
        if len(self.beta_class) != 2 or len(self.beta_student) != 2:
            raise ValueError("beta_class and beta_student need one row per test")
        if len(self.beta_class[0]) != len(self.beta_class[1]):
            raise ValueError("beta_class rows must have equal length")
        if len(self.beta_student[0]) != 2 or len(self.beta_student[1]) != 2:
            raise ValueError("beta_student rows cover (girl, age)")
        if self.type_shares is not None:
            if len(self.type_shares) != self.num_types or min(self.type_shares) <= 0:
                raise ValueError("type_shares needs num_types positive entries")
        if self.type_scales is not None:
            if len(self.type_scales) != self.num_types or min(self.type_scales) <= 0:
                raise ValueError("type_scales needs num_types positive entries")
        return self

    def TypeScales(self) -> List[float]:
        if self.type_scales is not None:
            return list(self.type_scales)
        # small classes (type 1) noisier than regular ones by default
        return [1.0 + 0.5 * (self.num_types - 1 - J) / max(self.num_types - 1, 1)
                for J in range(self.num_types)]

    def TypeShares(self) -> List[float]:
        if self.type_shares is not None:
            Total = sum(self.type_shares)
            return [Share / Total for Share in self.type_shares]
        return [1.0 / self.num_types] * self.num_types


class LoggingConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    level: str = "INFO"
    file: Optional[str] = None


class RuntimeSettings(BaseSettings):
    """Environment overrides, e.g. CLASSROOMPEERS_LOG_LEVEL=DEBUG"""

    model_config = SettingsConfigDict(env_prefix="CLASSROOMPEERS_", extra="ignore")

    env: str = "development"
    log_level: Optional[str] = None
    log_file: Optional[str] = None
    config_path: Optional[str] = None


class ConfigurationManager:
    """Loads and merges the JSON configuration file, environment and overrides"""

    def __init__(self, ConfigPath: Optional[str] = None, Environment: Optional[str] = None):
        self.Settings = RuntimeSettings()
        self.Environment = Environment or self.Settings.env
        self.ConfigPath = Path(ConfigPath or self.Settings.config_path
                               or ConfigPathForEnvironment(self.Environment))
        if not (ConfigPath or self.Settings.config_path) and not self.ConfigPath.exists():
            raise ConfigurationError(
                f"No configuration for environment '{self.Environment}' at {self.ConfigPath}")
        self.Raw = self._LoadFile(self.ConfigPath)

        try:
            self.Estimator = EstimatorConfig(**self.Raw.get("estimator", {}))
            self.Dgp = DgpConfig(**self.Raw.get("dgp", {}))
            self.Logging = LoggingConfig(**self.Raw.get("logging", {}))
        except ValidationError as Error:
            raise ConfigurationError(f"Invalid configuration in {self.ConfigPath}: {Error}") from Error

        if self.Settings.log_level:
            self.Logging = self.Logging.model_copy(update={"level": self.Settings.log_level})
        if self.Settings.log_file:
            self.Logging = self.Logging.model_copy(update={"file": self.Settings.log_file})

    @staticmethod
    def _LoadFile(FilePath: Path) -> Dict[str, Any]:
        if not FilePath.exists():
            return {}
        try:
            with open(FilePath, "r", encoding="utf-8") as File:
                Content = json.load(File)
        except json.JSONDecodeError as Error:
            raise ConfigurationError(f"Config file {FilePath} is not valid JSON: {Error}") from Error
        if not isinstance(Content, dict):
            raise ConfigurationError(f"Config file {FilePath} must hold a JSON object")
        return Content

    def WithEstimatorOverrides(self, **Overrides: Any) -> EstimatorConfig:
        return _Override(self.Estimator, Overrides)

    def WithDgpOverrides(self, **Overrides: Any) -> DgpConfig:
        return _Override(self.Dgp, Overrides)


def _Override(Model: BaseModel, Overrides: Dict[str, Any]) -> Any:
    Clean = {Key: Value for Key, Value in Overrides.items() if Value is not None}
    try:
        return type(Model)(**{**Model.model_dump(), **Clean})
    except ValidationError as Error:
        raise ConfigurationError(f"Invalid override {Clean}: {Error}") from Error
