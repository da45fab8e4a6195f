"""
Application settings loaded from environment variables and an optional .env file.

All run defaults of the verifier live here. Environment variables use the
PROBVERIF_ prefix, e.g. PROBVERIF_SEED=7 or PROBVERIF_N_SAMPLES=200000.
"""
import logging
from typing import Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Verifier run defaults."""

    model_config = SettingsConfigDict(
        env_prefix="PROBVERIF_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Decision problem
    eta: float = Field(0.95, gt=0.0, le=1.0)
    truncation_z: float = Field(3.0, gt=0.0)

    # Branch and bound
    seed: int = Field(0, ge=0)
    strategy: Literal["ordered", "babsr-prob"] = "babsr-prob"
    tau: float = Field(0.01, ge=0.0)
    n_samples: int = Field(100_000, ge=1)
    split_depth: int = Field(1, ge=1)
    batch_size: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    time_limit_s: Optional[float] = Field(120.0, gt=0.0)

    # Confidence escalation
    confidence_target: float = Field(1.0 - 1e-4, gt=0.0, lt=1.0)
    max_escalations: int = Field(6, ge=0)

    # Sampling
    sample_chunk_size: int = Field(200_000, ge=1)
    uncertainty_sample_fraction: float = Field(0.1, gt=0.0, le=1.0)
    uncertainty_min_samples: int = Field(10_000, ge=1)

    # Oracle
    oracle_samples: int = Field(1_000_000, ge=10_000)
    oracle_near_threshold_samples: int = Field(10_000_000, ge=10_000)
    oracle_near_threshold_margin: float = Field(0.01, ge=0.0)
    pattern_cap: int = Field(22, ge=0)
    pattern_hint_samples: int = Field(100_000, ge=1)

    # Logging
    log_level: str = "INFO"
    log_renderer: Literal["console", "json"] = "console"


class ConfigManager:
    """Holds the active settings and derives run budgets from them."""

    def __init__(self, settings: Optional[Settings] = None):
        self._settings = settings or Settings()

    @property
    def settings(self) -> Settings:
        return self._settings

    def reload(self) -> Settings:
        """Re-read environment and .env file."""
        self._settings = Settings()
        logger.debug("Settings reloaded from environment")
        return self._settings

    def default_budget(self, **overrides):
        """
        Build a VerificationBudget from the current settings.

        Args:
            **overrides: Budget fields that replace the configured value

        Returns:
            VerificationBudget instance
        """
        from app.models.verification import VerificationBudget

        s = self._settings
        values = {
            "time_limit_s": s.time_limit_s,
            "n_samples": s.n_samples,
            "split_depth": s.split_depth,
            "batch_size": s.batch_size,
            "workers": s.workers,
            "confidence_target": s.confidence_target,
            "max_escalations": s.max_escalations,
            "sample_chunk_size": s.sample_chunk_size,
        }
        values.update(overrides)
        return VerificationBudget(**values)


# Global config instance
config_manager = ConfigManager()
