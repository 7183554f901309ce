"""Configuration management for promocure"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Type, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from promocure.core.errors import ConfigValidationError

# Load environment variables
load_dotenv()

RecordT = TypeVar("RecordT", bound=BaseModel)


class PromocureSettings(BaseSettings):
    """Process-wide settings, overridable through PROMOCURE_* variables"""

    LOG_LEVEL: str = Field(default="INFO")
    WORKERS: int = Field(default=1, ge=1)
    OUTPUT_DIR: str = Field(default="results")
    DATA_DIR: str = Field(default="data")

    model_config = SettingsConfigDict(
        env_prefix="PROMOCURE_", env_file=".env", case_sensitive=True, extra="ignore"
    )


def load_yaml_config(config_path: str) -> Dict[str, Any]:
    """Load one YAML run file"""
    path = Path(config_path)
    if not path.exists():
        raise ConfigValidationError(f"config file not found: {path}")
    with open(path, "r") as f:
        loaded = yaml.safe_load(f)
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ConfigValidationError(f"config file {path} must hold a mapping at top level")
    return loaded


def validate_config(raw: Dict[str, Any], record: Type[RecordT]) -> RecordT:
    """Validate a raw mapping, reporting failures by dotted field path"""
    try:
        return record.model_validate(raw)
    except ValidationError as exc:
        fields = {}
        for error in exc.errors():
            path = ".".join(str(part) for part in error["loc"]) or "<root>"
            fields[path] = error["msg"]
        raise ConfigValidationError(f"invalid {record.__name__}", fields) from exc


def config_hash(config: Any) -> str:
    """SHA-256 of the canonical JSON form of a resolved config"""
    if isinstance(config, BaseModel):
        config = config.model_dump(mode="json")
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


settings = PromocureSettings()
