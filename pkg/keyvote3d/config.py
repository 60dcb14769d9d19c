# keyvote3d/config.py
import os
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Worker cap used when --threads is not given
    KEYVOTE3D_THREADS: Optional[int] = None

    # Logging
    KEYVOTE3D_LOG_LEVEL: str = "INFO"
    KEYVOTE3D_LOG_FILE: Optional[str] = None  # e.g. keyvote3d.log

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


def get_settings() -> Settings:
    """Fresh settings read from the current environment and `.env`."""
    return Settings()


def resolve_threads(flag: Optional[int] = None) -> int:
    """Worker count: explicit flag, then KEYVOTE3D_THREADS, then core count."""
    if flag is not None and flag > 0:
        return flag
    env_threads = get_settings().KEYVOTE3D_THREADS
    if env_threads is not None and env_threads > 0:
        return env_threads
    return os.cpu_count() or 1
