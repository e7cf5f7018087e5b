from pathlib import Path
from typing import Literal

from pydantic import BaseSettings, Field


class Settings(BaseSettings):
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"

    jobs: int = Field(1, ge=1)

    experiments: Path = Path("config/experiments")

    svg_scale: float = Field(10.0, gt=0)  # pixels per mm

    fit_cond: float = Field(1e-10, gt=0)  # relative singular value cutoff

    sentry_dsn: str | None = None
    sentry_environment: str = "test"

    class Config:
        env_prefix = "BTD_"


settings = Settings()
