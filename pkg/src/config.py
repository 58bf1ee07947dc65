import json
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import (
    BaseSettings,
    JsonConfigSettingsSource,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from src.schemas.exceptions import InvalidInputError
from src.schemas.reports import CostParams


class SuvConfig(BaseModel):
    short_sec: float = Field(20.0, gt=0.0, description="Short-utterance length used for pairing")
    full_sec: float = Field(120.0, gt=0.0, description="Full-utterance length of the pairs")
    copies: int = Field(1, ge=1, description="SUV-added copies per development vector")

    @model_validator(mode="after")
    def _short_below_full(self):
        if self.short_sec >= self.full_sec:
            raise ValueError("suv.short_sec must be below suv.full_sec")
        return self


class SnormConfig(BaseModel):
    enabled: bool = True
    cohort_path: Optional[Path] = None
    cohort_size: int = Field(200, ge=2)


class ExperimentConfig(BaseModel):
    """Synthetic reproduction protocol used by `run-experiment`."""
    dim: int = Field(50, gt=0)
    dev_speakers: int = Field(500, ge=2)
    dev_sessions: int = Field(4, ge=2)
    eval_speakers: int = Field(200, ge=2)
    eval_sessions: int = Field(5, ge=2)
    cohort_speakers: int = Field(200, ge=2)
    n_seeds: int = Field(5, ge=1)
    lda_dim: int = Field(40, gt=0)
    n1: int = Field(32, gt=0)
    speaker_var: float = Field(1.0, gt=0.0)
    session_var: float = Field(0.5, gt=0.0)
    utterance_var_per_sec: float = Field(15.0, gt=0.0)
    utterance_anisotropy: float = Field(0.0, ge=0.0)
    full_sec: float = Field(120.0, gt=0.0)
    conditions: list[str] = Field(
        default_factory=lambda: ["10sec-10sec", "20sec-10sec", "10sec(2)-10sec"]
    )

    @model_validator(mode="after")
    def _dims_fit(self):
        if self.lda_dim > self.dim:
            raise ValueError("experiment.lda_dim cannot exceed experiment.dim")
        if self.n1 > self.lda_dim:
            raise ValueError("experiment.n1 cannot exceed experiment.lda_dim")
        return self


class RunConfig(BaseSettings):
    """
    Resolved configuration for every command.

    Values come from keyword arguments (command-line flags) layered over an
    optional JSON file. Environment variables and dotenv files are ignored.
    """
    model_config = SettingsConfigDict(extra="ignore", json_file_encoding="utf-8")

    # --- Reproducibility ---
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    # --- Back-end ---
    lda_dim: int = Field(150, gt=0)
    n1: int = Field(120, gt=0)
    em_iterations: int = Field(20, ge=1)
    min_utts_per_speaker: int = Field(2, ge=1)
    partitions: int = Field(1, ge=1)

    suv: SuvConfig = Field(default_factory=SuvConfig)
    snorm: SnormConfig = Field(default_factory=SnormConfig)
    cost: CostParams = Field(default_factory=CostParams)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)

    # --- Logging ---
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in {"TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level '{value}'")
        return value

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (init_settings, JsonConfigSettingsSource(settings_cls))

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True)


def load_run_config(config_path: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """Build a RunConfig from an optional JSON file, flags taking precedence."""
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if config_path is None:
        return RunConfig(**overrides)
    if not Path(config_path).is_file():
        raise InvalidInputError(f"config file not found: {config_path}")

    class FileRunConfig(RunConfig):
        model_config = SettingsConfigDict(
            extra="ignore", json_file=config_path, json_file_encoding="utf-8"
        )

    try:
        return FileRunConfig(**overrides)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"config file {config_path} is not valid JSON: {e}")
