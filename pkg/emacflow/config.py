"""
Configuration settings for the emacflow solver
"""
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-wide defaults, overridable from the environment or a .env file"""

    # Logging
    LOG_LEVEL: str = Field(default="INFO")

    # Output
    OUTPUT_DIR: str = Field(default="results")
    SNAPSHOT_EVERY: int = Field(default=100, ge=1)

    # Quadrature (degree 5 integrates the P2 trilinear form exactly)
    QUADRATURE_DEGREE: int = Field(default=5, ge=1, le=6)

    # Newton
    NEWTON_ABS_TOL: float = Field(default=1e-10, gt=0)
    NEWTON_REL_TOL: float = Field(default=1e-8, gt=0)
    NEWTON_MAX_ITER: int = Field(default=20, ge=1)

    # Linear solver
    LINEAR_SOLVER_TOL: float = Field(default=1e-10, gt=0)

    # Sweeps
    MAX_WORKERS: int = Field(default=1, ge=1, description="Worker processes for sweep members")

    class Config:
        env_file = ".env"
        case_sensitive = True


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()
