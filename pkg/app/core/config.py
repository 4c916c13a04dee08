"""
Process settings using Pydantic Settings.
Handles environment variables for logging, output location and worker count.
Experiment parameters live in the run config file, never in the environment.
"""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Simulator settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "UAV Cooperative Perception Simulator"
    APP_VERSION: str = "1.0.0"

    # Execution
    RUNS_DIR: str = Field(default="runs", description="Root directory for run outputs")
    SIM_WORKERS: int = Field(
        default=1, ge=1, description="Worker processes used for sweep points"
    )

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "json"  # json or console

    # Monitoring
    ENABLE_METRICS: bool = True

    @property
    def version_string(self) -> str:
        """Describe-style version tag written into every run directory."""
        return f"v{self.APP_VERSION}-sim"


@lru_cache
def get_settings() -> Settings:
    """Get cached simulator settings."""
    return Settings()
