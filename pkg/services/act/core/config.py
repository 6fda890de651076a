"""
Configuration Management Module

Environment-level settings for the ACT toolkit using Pydantic Settings.
Run-specific hyperparameters live in ``services.act.schemas.config`` and are
loaded from a JSON run configuration; this module only covers knobs that
belong to the process (logging, threading, default output location).

Industry Standards:
    - Type hints for all configuration values
    - Environment variable override support (prefix ``ACT_``)
    - Singleton pattern with LRU cache
"""

from functools import lru_cache
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class ActSettings(BaseSettings):
    """
    Process Settings

    Centralized process configuration. Every field can be overridden via an
    ``ACT_``-prefixed environment variable or a ``.env`` file.

    Attributes:
        PROJECT_NAME: Human-readable project name
        SERVICE_NAME: Service tag attached to structured log records
        ENVIRONMENT: development, staging or production
        LOG_LEVEL: Root log level
        LOG_JSON: Force JSON logs regardless of environment (None = auto)
        NUM_THREADS: Torch intra-op threads
        OUTPUT_DIR: Default output directory for CLI commands

    Example:
        >>> settings = get_settings()
        >>> settings.NUM_THREADS
        1
    """

    PROJECT_NAME: str = "ACT Cross-Domain Graph Anomaly Detection"
    SERVICE_NAME: str = "act-gad"

    # Environment Configuration
    ENVIRONMENT: str = "development"  # development, staging, production
    LOG_LEVEL: str = "INFO"  # DEBUG, INFO, WARNING, ERROR, CRITICAL
    LOG_JSON: Optional[bool] = None

    # Compute Configuration
    # One thread keeps float64 reductions bit-reproducible across runs
    NUM_THREADS: int = 1

    OUTPUT_DIR: str = "runs"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="ACT_",
        case_sensitive=True,
        extra="ignore",
    )

    @property
    def use_json_logs(self) -> bool:
        """JSON logs in production unless explicitly overridden."""
        if self.LOG_JSON is not None:
            return self.LOG_JSON
        return self.ENVIRONMENT == "production"


@lru_cache()
def get_settings() -> ActSettings:
    """
    Get Process Settings (Singleton Pattern)

    Returns:
        ActSettings: Validated process configuration

    Note:
        Settings are cached; changes to the environment require a restart
        (or ``get_settings.cache_clear()`` in tests).
    """
    return ActSettings()


settings = get_settings()
