"""Configuration loader from environment variables"""
from pydantic_settings import BaseSettings
from pydantic import ConfigDict
from pathlib import Path
from typing import Optional


# .env lives at the repository root (core/ -> src/ -> root)
ENV_FILE = Path(__file__).parent.parent.parent / ".env"


class Settings(BaseSettings):
    """Application settings loaded from .env file"""

    # Service Configuration
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None  # also log to this file when set
    PORT: int = 8000
    ENVIRONMENT: str = "development"

    # Experiment outputs
    RESULTS_DIR: str = "results"
    DATASETS_DIR: str = "data"  # API runs may only read raw datasets below this directory
    REPORT_TIMESTAMPS: bool = False  # timestamps break byte-identical reports

    # Few-shot protocol defaults (5-way, 1-shot, 15 queries/class)
    DEFAULT_SEED: int = 0
    DEFAULT_WAYS: int = 5
    DEFAULT_SHOTS: int = 1
    DEFAULT_QUERIES: int = 15
    DEFAULT_EPISODES: int = 2000

    # Feature extraction chunk size (samples per forward)
    FEATURE_BATCH_SIZE: int = 128

    model_config = ConfigDict(
        env_file=str(ENV_FILE),
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


# Load settings once at startup
settings = Settings()
