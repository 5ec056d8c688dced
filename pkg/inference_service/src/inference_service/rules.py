"""Stub model rules: deterministic predictions without any real model.

A rule maps an image_id regex to fixed prediction fields. Ids matched by
no rule either fall back to a hash-derived prediction (so any id gets a
stable answer with zero configuration) or are omitted from the response,
letting clients exercise their partial-result paths.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SURFACE_TYPES = ["asphalt", "concrete", "paving_stones", "sett", "unpaved"]
ROAD_TYPES = ["roadway", "bike_lane", "cycleway", "sidewalk", "path", "no_focus"]

FIELDS = ("road_type", "road_type_conf", "surface_type", "surface_type_conf", "quality")


class RulesError(ValueError):
    """Rules file unusable."""


def hash_prediction(image_id: str) -> dict[str, Any]:
    """Stable pseudo-prediction derived from the id alone."""
    digest = hashlib.sha256(image_id.encode("utf-8")).digest()
    return {
        "road_type": ROAD_TYPES[digest[0] % len(ROAD_TYPES)],
        "road_type_conf": round(0.5 + digest[1] / 510, 3),
        "surface_type": SURFACE_TYPES[digest[2] % len(SURFACE_TYPES)],
        "surface_type_conf": round(0.5 + digest[3] / 510, 3),
        "quality": round(1.0 + 4.0 * digest[4] / 255, 3),
    }


def _validated_fields(raw: dict[str, Any], where: str) -> dict[str, Any]:
    missing = [f for f in FIELDS if f not in raw]
    if missing:
        raise RulesError(f"{where}: missing fields {missing}")
    if raw["surface_type"] not in SURFACE_TYPES:
        raise RulesError(f"{where}: unknown surface_type {raw['surface_type']!r}")
    if raw["road_type"] not in ROAD_TYPES:
        raise RulesError(f"{where}: unknown road_type {raw['road_type']!r}")
    quality = float(raw["quality"])
    if not 1.0 <= quality <= 5.0:
        raise RulesError(f"{where}: quality out of [1,5]: {quality}")
    for name in ("road_type_conf", "surface_type_conf"):
        conf = float(raw[name])
        if not 0.0 <= conf <= 1.0:
            raise RulesError(f"{where}: {name} out of [0,1]: {conf}")
    return {
        "road_type": raw["road_type"],
        "road_type_conf": float(raw["road_type_conf"]),
        "surface_type": raw["surface_type"],
        "surface_type_conf": float(raw["surface_type_conf"]),
        "quality": quality,
    }


@dataclass(frozen=True)
class StubRule:
    pattern: re.Pattern
    fields: dict[str, Any]


@dataclass
class RuleSet:
    rules: list[StubRule] = field(default_factory=list)
    fallback: str = "hash"  # "hash" | "omit"

    def predict(self, image_id: str) -> dict[str, Any] | None:
        for rule in self.rules:
            if rule.pattern.search(image_id):
                return dict(rule.fields)
        if self.fallback == "hash":
            return hash_prediction(image_id)
        return None


def load_rules_file(path: str | Path) -> RuleSet:
    """Read a rules JSON: `{"fallback": "omit"|"hash", "rules": [{"match":
    <regex>, ...prediction fields}]}`. A rules file defaults to omitting
    unmatched ids; no rules file at all means hash-derived answers for
    everything."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise RulesError(f"cannot read rules file {path}: {exc}") from exc
    fallback = doc.get("fallback", "omit")
    if fallback not in ("hash", "omit"):
        raise RulesError(f"{path}: fallback must be 'hash' or 'omit', got {fallback!r}")
    rules = []
    for i, raw in enumerate(doc.get("rules", [])):
        if "match" not in raw:
            raise RulesError(f"{path}: rule {i} has no 'match' pattern")
        try:
            pattern = re.compile(raw["match"])
        except re.error as exc:
            raise RulesError(f"{path}: rule {i}: bad regex: {exc}") from exc
        rules.append(StubRule(pattern=pattern, fields=_validated_fields(raw, f"{path}: rule {i}")))
    return RuleSet(rules=rules, fallback=fallback)
