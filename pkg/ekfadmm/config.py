# File: ekfadmm/config.py
"""
Centralized, validated configuration.

Runtime settings (logging, output root, oracle tolerances) come from the
environment and an optional .env file via pydantic-settings. Experiment
configurations are TOML files validated into `ExperimentConfig`.
"""
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from ekfadmm.core_models import ExperimentConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigurationError(ValueError):
    """Raised for invalid experiment configuration. The message starts with the field name."""
    pass


# --- Nested Settings Sections ---

class HindsightSettings(BaseModel):
    """Stopping rules for the batch proximal-gradient comparator."""
    tol: float = Field(1e-6, gt=0.0, description="Gradient-mapping norm at which the oracle stops.")
    max_iter: int = Field(2000, ge=1, description="Iteration cap for the oracle.")


class ReportSettings(BaseModel):
    """Controls the size and look of emitted curves."""
    curve_points: int = Field(50, ge=2, description="Checkpoints at which Loss/Mse/Reg/Cv are evaluated.")
    log_scale: bool = Field(True, description="Plot regret curves on a log y-axis.")
    save_params: bool = Field(True, description="Write params.csv with the final estimates.")
    trace_vectors_max: int = Field(
        10, ge=0, description="trace.csv carries x_k and nu_k columns only when n_x is at most this."
    )


class SweepSettings(BaseModel):
    """Multi-seed sweeps."""
    workers: int = Field(1, ge=1, description="Parallel worker processes for sweeps.")
    timeout_s: int = Field(3600, ge=1, description="Per-run timeout when collecting worker results.")


# --- Main Settings Class ---

class Settings(BaseSettings):
    """
    Runtime settings, loaded from EKFADMM_* environment variables and .env.
    Nested fields use a double underscore, e.g. EKFADMM_HINDSIGHT__TOL=1e-8.
    """
    model_config = SettingsConfigDict(
        env_prefix="EKFADMM_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
        env_nested_delimiter="__",
    )

    log_level: str = "INFO"
    log_json: bool = False
    output_root: Path = Path("results")
    debug_checks: bool = Field(False, description="Check positive definiteness after every covariance update.")

    hindsight: HindsightSettings = Field(default_factory=HindsightSettings)
    report: ReportSettings = Field(default_factory=ReportSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)


_settings_instance: Optional[Settings] = None


def get_settings() -> Settings:
    global _settings_instance
    if _settings_instance is None:
        _settings_instance = Settings()
    return _settings_instance


def reset_settings() -> None:
    """Drops the cached settings so the next get_settings() re-reads the environment."""
    global _settings_instance
    _settings_instance = None


# --- Experiment Config Loading ---

def first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    field = ".".join(str(part) for part in err["loc"]) or "config"
    return f"{field}: {err['msg']}"


def validate_experiment(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validates a raw mapping, re-raising pydantic errors as ConfigurationError."""
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(first_error(e)) from e


def load_experiment_config(path: Path) -> ExperimentConfig:
    """
    Reads a TOML experiment file. Top-level keys map to ExperimentConfig
    fields; [model], [reg] and [hyper] sections map to the nested models.
    """
    try:
        raw = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigurationError(f"config_file: cannot read '{path}': {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"config_file: malformed TOML in '{path}': {e}") from e
    return validate_experiment(raw)
