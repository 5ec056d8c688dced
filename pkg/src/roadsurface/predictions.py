"""Label taxonomies and prediction providers.

Predictions arrive either as a precomputed CSV file or from an HTTP
inference endpoint; downstream stages only ever see the `Prediction`
record, so the two providers are interchangeable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import requests

QUALITY_MIN = 1.0  # excellent
QUALITY_MAX = 5.0  # very bad

PREDICTION_CSV_HEADER = [
    "image_id",
    "road_type",
    "road_type_conf",
    "surface_type",
    "surface_type_conf",
    "quality",
]


class SurfaceType(str, Enum):
    ASPHALT = "asphalt"
    CONCRETE = "concrete"
    PAVING_STONES = "paving_stones"
    SETT = "sett"
    UNPAVED = "unpaved"


class RoadType(str, Enum):
    ROADWAY = "roadway"
    BIKE_LANE = "bike_lane"
    CYCLEWAY = "cycleway"
    SIDEWALK = "sidewalk"
    PATH = "path"
    NO_FOCUS = "no_focus"


class QualityClass(str, Enum):
    EXCELLENT = "excellent"
    GOOD = "good"
    INTERMEDIATE = "intermediate"
    BAD = "bad"
    VERY_BAD = "very_bad"


@dataclass(frozen=True)
class Prediction:
    """Per-image classifier output. `quality` is a continuous score in
    [1, 5] where 1 is excellent and 5 is very bad."""

    image_id: str
    road_type: RoadType
    road_type_conf: float
    surface_type: SurfaceType
    surface_type_conf: float
    quality: float

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        for name in ("road_type_conf", "surface_type_conf"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of [0,1]: {v}")
        if not (math.isfinite(self.quality) and QUALITY_MIN <= self.quality <= QUALITY_MAX):
            raise ValueError(f"quality out of [1,5]: {self.quality}")


def quality_to_class(q: float) -> QualityClass:
    """Discretize a continuous quality score, rounding half away from zero."""
    if not QUALITY_MIN <= q <= QUALITY_MAX:
        raise ValueError(f"quality out of [1,5]: {q}")
    bucket = min(5, math.floor(q + 0.5))
    return (
        QualityClass.EXCELLENT,
        QualityClass.GOOD,
        QualityClass.INTERMEDIATE,
        QualityClass.BAD,
        QualityClass.VERY_BAD,
    )[bucket - 1]


QUALITY_CLASS_RANK = {c: i + 1 for i, c in enumerate(QualityClass)}


class PredictionFileError(ValueError):
    """Bad row in a prediction CSV; carries the offending row number."""


@dataclass
class PredictionFileReport:
    rows: int = 0
    duplicates: int = 0
    skipped: int = 0


def _parse_row(row: dict[str, str], line_no: int) -> Prediction:
    try:
        road_type = RoadType(row["road_type"])
    except ValueError:
        raise PredictionFileError(
            f"row {line_no}: unknown road_type {row['road_type']!r}"
        ) from None
    try:
        surface_type = SurfaceType(row["surface_type"])
    except ValueError:
        raise PredictionFileError(
            f"row {line_no}: unknown surface_type {row['surface_type']!r}"
        ) from None
    try:
        return Prediction(
            image_id=row["image_id"],
            road_type=road_type,
            road_type_conf=float(row["road_type_conf"]),
            surface_type=surface_type,
            surface_type_conf=float(row["surface_type_conf"]),
            quality=float(row["quality"]),
        )
    except ValueError as exc:
        raise PredictionFileError(f"row {line_no}: {exc}") from None


def load_predictions_file(
    path: str | Path, lenient: bool = False
) -> tuple[dict[str, Prediction], PredictionFileReport]:
    """Load a prediction CSV into an image_id -> Prediction map.

    Duplicate ids keep the last row and are counted. Rows with unknown
    enum tokens or out-of-range values raise in the default fail-fast
    mode; with `lenient` they are skipped and counted instead.
    """
    path = Path(path)
    report = PredictionFileReport()
    out: dict[str, Prediction] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != PREDICTION_CSV_HEADER:
            raise PredictionFileError(
                f"{path}: expected header {','.join(PREDICTION_CSV_HEADER)}, "
                f"got {reader.fieldnames}"
            )
        for line_no, row in enumerate(reader, start=2):
            report.rows += 1
            try:
                pred = _parse_row(row, line_no)
            except PredictionFileError:
                if not lenient:
                    raise
                report.skipped += 1
                continue
            if pred.image_id in out:
                report.duplicates += 1
            out[pred.image_id] = pred
    return out, report


def write_predictions_file(path: str | Path, predictions: Iterable[Prediction]) -> None:
    """Write predictions as CSV in the canonical column order."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_CSV_HEADER)
        for p in predictions:
            writer.writerow(
                [
                    p.image_id,
                    p.road_type.value,
                    repr(p.road_type_conf),
                    p.surface_type.value,
                    repr(p.surface_type_conf),
                    repr(p.quality),
                ]
            )


class PredictionBackendError(RuntimeError):
    """HTTP prediction endpoint unreachable or replying garbage."""


@dataclass
class PartialFailureReport:
    missing_ids: list[str]


def predict_via_http(
    endpoint: str,
    image_ids: Sequence[str],
    batch_size: int = 100,
    session: requests.Session | None = None,
    timeout: float = 30.0,
) -> tuple[dict[str, Prediction], PartialFailureReport]:
    """Request predictions for `image_ids` from an inference service.

    Ids are sent in batches of `batch_size` to POST <endpoint>/predict.
    Ids the service does not answer for end up in the partial-failure
    report rather than raising.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    sess = session or requests.Session()
    url = endpoint.rstrip("/") + "/predict"
    out: dict[str, Prediction] = {}
    for start in range(0, len(image_ids), batch_size):
        batch = [str(i) for i in image_ids[start : start + batch_size]]
        try:
            resp = sess.post(url, json={"image_ids": batch}, timeout=timeout)
        except requests.RequestException as exc:
            raise PredictionBackendError(f"POST {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise PredictionBackendError(
                f"POST {url} returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            payload = resp.json()
            rows = payload["predictions"]
        except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
            raise PredictionBackendError(f"malformed response from {url}: {exc}") from exc
        for row in rows:
            try:
                pred = Prediction(
                    image_id=str(row["image_id"]),
                    road_type=RoadType(row["road_type"]),
                    road_type_conf=float(row["road_type_conf"]),
                    surface_type=SurfaceType(row["surface_type"]),
                    surface_type_conf=float(row["surface_type_conf"]),
                    quality=float(row["quality"]),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise PredictionBackendError(f"bad prediction record from {url}: {exc}") from exc
            out[pred.image_id] = pred
    missing = [i for i in map(str, image_ids) if i not in out]
    return out, PartialFailureReport(missing_ids=missing)


def passes_confidence(p: Prediction, min_confidence: float) -> bool:
    """Optional noise filter: both confidences must reach the threshold."""
    return min(p.road_type_conf, p.surface_type_conf) >= min_confidence
