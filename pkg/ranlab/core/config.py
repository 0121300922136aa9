from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="RANLAB_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Overrides the experiment config's output_dir when set
    output_dir: Optional[str] = None

    # Logging
    log_level: str = "INFO"

    # Default worker-pool size for seed dispatch
    jobs: int = 1


def get_settings() -> Settings:
    """
    Load settings from the current environment.

    Returns:
        Settings: A fresh settings object (environment changes are picked up)
    """
    return Settings()


# Global settings instance
settings = get_settings()
