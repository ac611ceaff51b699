"""
Configuration management using Pydantic with YAML and environment support.
Priority: CLI flags > environment (PQE_<SECTION>__<FIELD>) > YAML > defaults
"""

import logging
import os
import threading
import time
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

logger = logging.getLogger(__name__)

ENV_PREFIX = "PQE_"
ENV_DELIMITER = "__"
MAX_CONFIG_BYTES = 1024 * 1024
PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "default.yaml"


class ConfigSource:
    """Tracks the source of configuration values."""

    def __init__(self):
        self.sources: Dict[str, Dict[str, Any]] = {}

    def set_source(self, key: str, source_type: str, source_path: Optional[str] = None) -> None:
        """Record where a configuration value came from ('yaml', 'env', 'cli', 'default')."""
        self.sources[key] = {"type": source_type, "path": source_path, "timestamp": time.time()}

    def get_source(self, key: str) -> Dict[str, Any]:
        return self.sources.get(key, {"type": "default", "path": None})

    def describe(self) -> str:
        lines = []
        for key in sorted(self.sources):
            info = self.sources[key]
            where = f" ({info['path']})" if info["path"] else ""
            lines.append(f"{key}: {info['type']}{where}")
        return "\n".join(lines)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class CatalogSettings(_Section):
    """Where the catalog lives."""

    catalog_path: str = Field("catalog.yaml", description="Catalog file (YAML, version 1)")
    default_schema: str = Field("public", description="Schema searched for unqualified names")
    autosave: bool = Field(True, description="Save the catalog after every successful DDL")

    @field_validator("default_schema")
    @classmethod
    def validate_default_schema(cls, v: str) -> str:
        if not v or not v.replace("_", "").isalnum():
            raise ValueError("default schema must be a non-empty identifier")
        return v


class StorageSettings(_Section):
    """Store emulator and materialized-view storage locations."""

    data_dir: str = Field("data", description="Root directory for store data files")
    views_dir: str = Field("views", description="Directory holding materialized view rows")

    @field_validator("data_dir", "views_dir")
    @classmethod
    def validate_dir(cls, v: str) -> str:
        if not v:
            raise ValueError("directory must be a non-empty path")
        return os.path.normpath(v)


class PlannerSettings(_Section):
    """Planner heuristics."""

    bind_join_threshold: int = Field(
        1000, description="Largest estimated outer cardinality for a bind join", ge=0, le=10_000_000
    )
    pushdown_enabled: bool = Field(True, description="Offer filters, sorts and aggregates to wrappers")
    cnf_max_conjuncts: int = Field(
        64, description="Upper bound on conjuncts produced when distributing OR over AND", ge=1, le=4096
    )


class InferenceSettings(_Section):
    """Schema import defaults."""

    sample_limit: int = Field(1000, description="Documents sampled per collection", ge=1, le=10_000_000)
    parent_id: bool = Field(True, description="Add _parent_id columns to child tables")
    min_prob: float = Field(0.0, description="Drop fields rarer than this", ge=0.0, le=1.0)


class SchedulerSettings(_Section):
    """Materialized-view refresh loop."""

    tick_seconds: float = Field(1.0, description="Seconds between scheduler ticks", gt=0, le=3600)


class OutputSettings(_Section):
    """Result rendering."""

    mode: Literal["table", "tsv"] = Field("table", description="Result format on stdout")


class LoggingSettings(_Section):
    """Logging configuration."""

    log_level: str = Field("WARNING", description="Logging level")
    log_dir: str = Field("logs", description="Log directory")
    log_config: str = Field(
        str(PROJECT_ROOT / "config" / "log_config.json"), description="logging dictConfig file"
    )
    file_logging: bool = Field(False, description="Write rotating log files into log_dir")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        if v.upper() not in valid_levels:
            raise ValueError(f"Invalid log level. Must be one of: {', '.join(sorted(valid_levels))}")
        return v.upper()

    @field_validator("log_dir")
    @classmethod
    def validate_log_dir(cls, v: str) -> str:
        if not v:
            raise ValueError("Log directory must be a non-empty string")
        return os.path.normpath(v)


class AppSettings(BaseModel):
    """Main application settings."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    catalog: CatalogSettings = Field(default_factory=CatalogSettings)
    storage: StorageSettings = Field(default_factory=StorageSettings)
    planner: PlannerSettings = Field(default_factory=PlannerSettings)
    inference: InferenceSettings = Field(default_factory=InferenceSettings)
    scheduler: SchedulerSettings = Field(default_factory=SchedulerSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    def with_overrides(self, overrides: Mapping[str, Any], source: str = "cli") -> "AppSettings":
        """Copy with dotted-key overrides ("planner.bind_join_threshold": 10) applied."""
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            data.setdefault(section, {})[name] = value
            _config_source.set_source(key, source)
        return AppSettings.model_validate(data)

    @staticmethod
    def environment_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, Dict[str, str]]:
        env = os.environ if environ is None else environ
        found: Dict[str, Dict[str, str]] = {}
        for name, value in env.items():
            if not name.upper().startswith(ENV_PREFIX):
                continue
            key = name[len(ENV_PREFIX):].lower()
            section, delimiter, field_name = key.partition(ENV_DELIMITER)
            if not delimiter or section not in AppSettings.model_fields:
                continue
            found.setdefault(section, {})[field_name] = value
            _config_source.set_source(f"{section}.{field_name}", "env")
        return found

    @classmethod
    def load_from_yaml(
        cls, config_path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None
    ) -> "AppSettings":
        """Load settings from a YAML file with environment variable overrides."""
        config_data: Dict[str, Any] = {}
        path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH

        if path.exists():
            try:
                if path.stat().st_size > MAX_CONFIG_BYTES:
                    logger.error(f"Configuration file too large: {path}")
                    return cls()
                with open(path, "r", encoding="utf-8") as f:
                    config_data = yaml.safe_load(f) or {}
                if not isinstance(config_data, dict):
                    logger.error(f"Invalid configuration format in {path}")
                    return cls()
                for section, values in config_data.items():
                    if isinstance(values, dict):
                        for key in values:
                            _config_source.set_source(f"{section}.{key}", "yaml", str(path))
                logger.info(f"Loaded YAML configuration from {path}")
            except yaml.YAMLError as e:
                logger.error(f"Error parsing YAML configuration: {e}")
                return cls()
            except OSError as e:
                logger.error(f"Error reading configuration file: {e}")
                return cls()
        elif config_path:
            logger.warning(f"Configuration file not found: {path}")

        for section, values in cls.environment_overrides(environ).items():
            merged = dict(config_data.get(section) or {})
            merged.update(values)
            config_data[section] = merged

        try:
            return cls.model_validate(config_data)
        except ValidationError as e:
            logger.error(f"Error creating settings from configuration: {e}")
            return cls()

    def save_to_yaml(self, config_path: str) -> bool:
        """Save current settings to a YAML file atomically."""
        try:
            config_file_path = Path(config_path)
            config_file_path.parent.mkdir(parents=True, exist_ok=True)
            temp_path = config_file_path.with_suffix(".tmp")
            with open(temp_path, "w", encoding="utf-8") as f:
                yaml.safe_dump(self.model_dump(), f, default_flow_style=False, sort_keys=False, indent=2)
            temp_path.replace(config_file_path)
            logger.info(f"Configuration saved to {config_path}")
            return True
        except OSError as e:
            logger.error(f"Error saving configuration: {e}")
            return False


_config_source = ConfigSource()


def get_config_sources() -> ConfigSource:
    return _config_source


# Global settings instance
_settings: Optional[AppSettings] = None
_settings_lock = threading.Lock()


def get_settings() -> AppSettings:
    """Get global settings instance, loading if necessary."""
    global _settings
    if _settings is None:
        with _settings_lock:
            if _settings is None:
                _settings = AppSettings.load_from_yaml()
    return _settings


def reload_settings(config_path: Optional[str] = None) -> AppSettings:
    """Reload settings from file."""
    global _settings
    with _settings_lock:
        _settings = AppSettings.load_from_yaml(config_path)
    return _settings


def set_settings(settings: AppSettings) -> None:
    global _settings
    with _settings_lock:
        _settings = settings


def reset_settings() -> None:
    """Forget the loaded settings (used by tests)."""
    global _settings
    with _settings_lock:
        _settings = None
