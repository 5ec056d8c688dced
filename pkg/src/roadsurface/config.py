"""Pipeline configuration: defaults, flat config file, CLI overrides.

Precedence is CLI flag > config file > built-in default. The access
token is deliberately absent here; it only ever comes from the
environment so it cannot leak into shell history or committed configs.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .predictions import RoadType

CONFIG_SECTION = "pipeline"
ROAD_TYPES_SECTION = "road_types"


class ConfigError(ValueError):
    """Configuration unusable."""


@dataclass
class PipelineConfig:
    boundary: str | None = None  # bbox string or polygon GeoJSON path
    network: str | None = None  # GeoJSON or Overpass JSON path
    images: str | None = None  # "live", fixture dir, or records .jsonl
    backend: str | None = None  # prediction CSV path or http(s) endpoint
    out: str = "out"
    format: str = "both"  # geojson | csv | both
    subsegment_m: float = 20.0
    min_agreeing: int = 3
    min_fraction: float = 0.5
    radius_m: float = 10.0
    min_confidence: float = 0.0
    date_min: int | None = None
    page_limit: int | None = None
    requests_per_minute: int = 50
    batch_size: int = 100
    lenient: bool = False
    write_placements: bool = False
    # file-only: [road_types] section overriding the highway mapping,
    # e.g. `track = roadway` or `service = none`
    road_types: dict[str, RoadType | None] | None = None

    def __post_init__(self) -> None:
        if self.subsegment_m <= 0:
            raise ConfigError(f"subsegment_m must be positive: {self.subsegment_m}")
        if self.min_agreeing < 1:
            raise ConfigError(f"min_agreeing must be >= 1: {self.min_agreeing}")
        if not 0.0 < self.min_fraction <= 1.0:
            raise ConfigError(f"min_fraction must be in (0,1]: {self.min_fraction}")
        if self.radius_m <= 0:
            raise ConfigError(f"radius_m must be positive: {self.radius_m}")
        if self.min_confidence < 0 or self.min_confidence > 1:
            raise ConfigError(f"min_confidence must be in [0,1]: {self.min_confidence}")
        if self.format not in ("geojson", "csv", "both"):
            raise ConfigError(f"format must be geojson, csv or both: {self.format!r}")

    @classmethod
    def load(cls, config_file: str | Path | None = None, **overrides: Any) -> "PipelineConfig":
        """Merge defaults, an optional INI file and explicit overrides."""
        values: dict[str, Any] = {}
        if config_file is not None:
            values.update(_read_config_file(config_file))
        for key, value in overrides.items():
            if value is not None:
                values[key] = value
        return cls(**values)


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _coerce(name: str, raw: str) -> Any:
    kind = _FIELD_TYPES[name]
    if kind in ("float", "float | None"):
        return float(raw)
    if kind in ("int", "int | None"):
        return int(raw)
    if kind == "bool":
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return raw


def _read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not parser.has_section(CONFIG_SECTION):
        raise ConfigError(f"{path}: missing [{CONFIG_SECTION}] section")
    out: dict[str, Any] = {}
    for key, raw in parser.items(CONFIG_SECTION):
        if key not in _FIELD_TYPES or key == "road_types":
            raise ConfigError(f"{path}: unknown option {key!r}")
        try:
            out[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {key!r}: {exc}") from exc
    if parser.has_section(ROAD_TYPES_SECTION):
        overrides: dict[str, RoadType | None] = {}
        for highway, raw in parser.items(ROAD_TYPES_SECTION):
            if raw.strip().lower() == "none":
                overrides[highway] = None
                continue
            try:
                overrides[highway] = RoadType(raw.strip())
            except ValueError:
                raise ConfigError(
                    f"{path}: [{ROAD_TYPES_SECTION}] {highway}: unknown road type {raw!r}"
                ) from None
        out["road_types"] = overrides
    return out
