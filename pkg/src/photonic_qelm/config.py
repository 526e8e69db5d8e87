"""Application configuration: environment settings and run-config parsing."""
from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path

from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .schemas import RunConfig


class Settings(BaseSettings):
    """Process-wide settings loaded from environment / .env."""

    app_name: str = Field(default="photonic-qelm", description="Human readable tool name")
    output_dir: Path = Field(default=Path("./results"), description="Default bundle directory")
    log_level: str = Field(default="INFO")
    threads: int = Field(default=1, ge=1, description="Worker threads for scans and resamples")

    model_config = SettingsConfigDict(
        env_prefix="QELM_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )


@lru_cache
def get_settings() -> Settings:
    """Return cached settings instance."""

    return Settings()


class ConfigParseError(ValueError):
    """Raised when a run-config file is not well-formed JSON."""


class ConfigValidationError(ValueError):
    """Raised when a run-config document violates the schema."""

    def __init__(self, message: str, fields: list[str]) -> None:
        super().__init__(message)
        self.fields = fields


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    """Parse and fully validate a JSON run-config document."""

    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigParseError(f"{source}:1:1: top-level value must be an object")

    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        fields = [".".join(str(part) for part in err["loc"]) for err in exc.errors()]
        details = "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigValidationError(f"{source}: invalid config: {details}", fields) from exc


def parse_config(path: str | Path) -> RunConfig:
    """Read a run-config file; every default is materialized in the returned model."""

    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigParseError(f"{path}: cannot read config: {exc}") from exc
    return parse_config_text(text, source=str(path))


def echo_config(config: RunConfig) -> str:
    """Serialize a config so that ``parse_config_text(echo_config(c)) == c``."""

    return config.model_dump_json(indent=2)


__all__ = [
    "ConfigParseError",
    "ConfigValidationError",
    "Settings",
    "echo_config",
    "get_settings",
    "parse_config",
    "parse_config_text",
]
