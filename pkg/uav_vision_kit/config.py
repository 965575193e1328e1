"""Tracker configuration files and sequence specs."""

import json
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from .models import SequenceSpec, TrackerConfig
from .outputs import atomic_write_text


class ConfigError(ValueError):
    """Raised for unreadable or invalid configuration."""


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(loc) for loc in item["loc"]) or "value"
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def parse_tracker_config(text: str) -> TrackerConfig:
    """Parse key=value lines into a TrackerConfig; '#' starts a comment."""
    known = set(TrackerConfig.model_fields)
    values: dict[str, str] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value

    try:
        return TrackerConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def load_tracker_config(path: Path) -> TrackerConfig:
    """Load tracker config from a key=value file."""
    return parse_tracker_config(Path(path).read_text())


def merge_overrides(config: TrackerConfig, overrides: Mapping[str, Any]) -> TrackerConfig:
    """Apply command-line overrides on top of a config; None means not given."""
    given = {key: value for key, value in overrides.items() if value is not None}
    unknown = sorted(set(given) - set(TrackerConfig.model_fields))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}")

    try:
        return TrackerConfig.model_validate({**config.model_dump(), **given})
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def dump_tracker_config(config: TrackerConfig) -> str:
    """Render a config in the key=value file format."""
    return "".join(f"{key} = {value}\n" for key, value in config.model_dump().items())


def load_sequence_spec(path: Path) -> SequenceSpec:
    """Load a sequence spec from JSON."""
    try:
        return SequenceSpec.model_validate_json(Path(path).read_text())
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}") from e


def save_sequence_spec(spec: SequenceSpec, path: Path) -> None:
    """Save a sequence spec as JSON."""
    data = spec.model_dump(mode="json", exclude_none=True)
    atomic_write_text(Path(path), json.dumps(data, indent=2) + "\n")
