"""
Process Configuration
Centralized settings management using Pydantic Settings
"""

from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings loaded from MFSB_* environment variables"""

    OUT_DIR: str = "runs"
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None
    LEDGER_NAME: str = "ledger.db"

    # Ablation reporting
    DEFAULT_SEEDS: int = Field(default=5, ge=1)

    # Scoring batch size; results do not depend on it
    EVAL_BATCH_SIZE: int = Field(default=32, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="MFSB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore"
    )

    @property
    def out_path(self) -> Path:
        """Output root as Path object"""
        return Path(self.OUT_DIR)

    def ledger_path(self, out_dir: Optional[Path] = None) -> Path:
        """Run ledger location under the given (or default) output root"""
        return (out_dir or self.out_path) / self.LEDGER_NAME


# Global settings instance
settings = Settings()
