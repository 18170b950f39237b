# shared/config.py
"""
Environment configuration for the fractional Kirchhoff solver
Defaults for tolerances, iteration caps and harness execution
"""

from functools import lru_cache
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class SolverSettings(BaseSettings):
    """Solver and harness configuration (env prefix KFRAC_)"""

    model_config = SettingsConfigDict(
        env_prefix="KFRAC_",
        env_file=".env",
        extra="ignore",
    )

    # Linear solvers
    LINEAR_TOL: float = Field(1e-11, gt=0, description="Relative residual for inner solves")
    LINEAR_MAX_ITER: int = Field(5000, gt=0)
    DENSE_FALLBACK_DIM: int = Field(2000, ge=0, description="Dense LU allowed up to this size")

    # Newton at the first time level
    NEWTON_TOL: float = Field(1e-7, gt=0)
    NEWTON_MAX_ITER: int = Field(50, gt=0)

    # Last memory interval [t_{n-1}, t_n]: trapezoid closed at U^n, or left rectangle
    MEMORY_CLOSURE: Literal["implicit", "explicit"] = "implicit"

    # Harness
    LONG_RUN_STEPS: int = Field(200_000, gt=0, description="N above this needs --allow-long")
    WORKERS: int = Field(1, ge=1)

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "json"


@lru_cache(maxsize=1)
def get_settings() -> SolverSettings:
    """Cached settings instance"""
    return SolverSettings()
