"""End-to-end orchestration: ingest, predict, assign, aggregate, export.

Each stage is independently callable so persisted intermediates can be
reused (re-aggregating without re-fetching is the common loop). Stage
failures surface as `StageError` with the stage name; exports are
written atomically so a failed run leaves no partial files behind.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .aggregation import SegmentAggregate, SegmentStatus, aggregate_network
from .assignment import DiscardReason, ImagePlacement, assign_images, write_placements_csv
from .config import PipelineConfig
from .geo import build_index
from .imagery import (
    ImageRecord,
    MapillaryClient,
    TOKEN_ENV_VAR,
    load_fixture_store,
    read_image_records,
)
from .network import (
    Boundary,
    DEFAULT_HIGHWAY_ROAD_TYPE,
    RoadNetwork,
    looks_like_overpass,
    parse_network_geojson,
    parse_overpass_json,
)
from .predictions import (
    Prediction,
    load_predictions_file,
    passes_confidence,
    predict_via_http,
)


class StageError(RuntimeError):
    """A pipeline stage failed; carries which one and why."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class RunSummary:
    images_total: int = 0
    discarded: dict[str, int] = dc_field(default_factory=dict)
    placements: int = 0
    segments_total: int = 0
    segments_by_status: dict[str, int] = dc_field(default_factory=dict)
    coverage: float = 0.0
    outputs: dict[str, str] = dc_field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "images_total": self.images_total,
            "discarded": dict(sorted(self.discarded.items())),
            "placements": self.placements,
            "segments_total": self.segments_total,
            "segments_by_status": dict(sorted(self.segments_by_status.items())),
            "coverage": self.coverage,
            # file names only: identical runs must produce identical bytes
            # no matter which directory they export into
            "outputs": {k: Path(v).name for k, v in sorted(self.outputs.items())},
        }


def _stage(name: str):
    """Wrap stage exceptions with the stage name, pass StageError through."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, str(exc)) from exc
            return False

    return _Ctx()


def load_boundary(config: PipelineConfig) -> Boundary:
    with _stage("boundary"):
        if not config.boundary:
            raise ValueError("no boundary configured (bbox string or polygon file)")
        return Boundary.from_spec(config.boundary)


def load_network(config: PipelineConfig, boundary: Boundary) -> RoadNetwork:
    with _stage("network"):
        if not config.network:
            raise ValueError("no network source configured")
        path = Path(config.network)
        if not path.exists():
            raise FileNotFoundError(f"network file not found: {path}")
        mapping = None
        if config.road_types:
            mapping = dict(DEFAULT_HIGHWAY_ROAD_TYPE)
            for highway, road_type in config.road_types.items():
                if road_type is None:
                    mapping.pop(highway, None)
                else:
                    mapping[highway] = road_type
        doc = path.read_bytes()
        if looks_like_overpass(doc):
            return parse_overpass_json(doc, boundary, mapping)
        return parse_network_geojson(doc, boundary, mapping)


def load_images(config: PipelineConfig, boundary: Boundary) -> list[ImageRecord]:
    with _stage("imagery"):
        if not config.images:
            raise ValueError("no imagery source configured")
        source = config.images
        if source == "live":
            token = os.environ.get(TOKEN_ENV_VAR, "")
            client = MapillaryClient(token, per_minute=config.requests_per_minute)
            records, _ = client.fetch_images(
                boundary.bbox, date_min=config.date_min, page_limit=config.page_limit
            )
            return records
        path = Path(source)
        if path.is_dir():
            store = load_fixture_store(path)
            records, _ = store.fetch_images(
                boundary.bbox, date_min=config.date_min, page_limit=config.page_limit
            )
            return records
        if path.exists():
            records = read_image_records(path)
            if config.date_min is not None:
                records = [r for r in records if r.captured_at >= config.date_min]
            return sorted(records, key=lambda r: r.image_id)
        raise FileNotFoundError(f"imagery source not found: {source}")


def load_predictions(config: PipelineConfig, image_ids: list[str]) -> dict[str, Prediction]:
    with _stage("backend"):
        if not config.backend:
            raise ValueError("no prediction backend configured")
        if config.backend.startswith(("http://", "https://")):
            preds, _ = predict_via_http(
                config.backend, image_ids, batch_size=config.batch_size
            )
            return preds
        path = Path(config.backend)
        if not path.exists():
            raise FileNotFoundError(f"prediction file not found: {path}")
        preds, _ = load_predictions_file(path, lenient=config.lenient)
        return preds


def run_pipeline(config: PipelineConfig) -> tuple[list[SegmentAggregate], RunSummary]:
    """Execute the full flow and export the classified network."""
    boundary = load_boundary(config)
    network = load_network(config, boundary)
    records = load_images(config, boundary)
    predictions = load_predictions(config, [r.image_id for r in records])

    summary = RunSummary(images_total=len(records))

    with _stage("assign"):
        paired = []
        no_prediction = 0
        low_confidence = 0
        for record in records:
            pred = predictions.get(record.image_id)
            if pred is None:
                no_prediction += 1
                continue
            if config.min_confidence and not passes_confidence(pred, config.min_confidence):
                low_confidence += 1
                continue
            paired.append((record, pred))
        index = build_index(
            [(s.segment_id, s.geometry) for s in network.segments],
            cell_size=2.0 * config.radius_m,
            radius=config.radius_m,
            frame=network.frame,
        )
        placements, discards = assign_images(paired, network, index, config.radius_m)

    summary.discarded = {
        "no_prediction": no_prediction,
        "low_confidence": low_confidence,
        DiscardReason.NO_FOCUS.value: discards.count(DiscardReason.NO_FOCUS),
        DiscardReason.OUT_OF_RANGE.value: discards.count(DiscardReason.OUT_OF_RANGE),
    }
    summary.placements = len(placements)

    with _stage("aggregate"):
        aggregates = aggregate_network(
            placements,
            predictions,
            network,
            step=config.subsegment_m,
            min_agreeing=config.min_agreeing,
            min_fraction=config.min_fraction,
        )

    summary.segments_total = len(aggregates)
    for agg in aggregates:
        summary.segments_by_status[agg.status.value] = (
            summary.segments_by_status.get(agg.status.value, 0) + 1
        )
    ok = summary.segments_by_status.get(SegmentStatus.OK.value, 0)
    summary.coverage = ok / len(aggregates) if aggregates else 0.0

    with _stage("export"):
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        try:
            if config.format in ("geojson", "both"):
                path = out_dir / "classified_network.geojson"
                export_geojson(aggregates, network, path)
                written.append(path)
                summary.outputs["geojson"] = str(path)
            if config.format in ("csv", "both"):
                path = out_dir / "classified_network.csv"
                export_csv(aggregates, path)
                written.append(path)
                summary.outputs["csv"] = str(path)
            if config.write_placements:
                path = out_dir / "placements.csv"
                write_placements_csv(path, placements)
                written.append(path)
                summary.outputs["placements"] = str(path)
            summary_path = out_dir / "summary.json"
            _write_atomic(summary_path, json.dumps(summary.to_dict(), sort_keys=True, indent=2) + "\n")
            summary.outputs["summary"] = str(summary_path)
        except Exception:
            # Never leave a half-written export behind.
            for path in written:
                path.unlink(missing_ok=True)
            raise

    return aggregates, summary


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def export_geojson(
    aggregates: Iterable[SegmentAggregate],
    network: RoadNetwork,
    path: str | Path,
) -> None:
    """One LineString feature per segment with the aggregate properties;
    unclassified segments carry nulls plus their status."""
    segments = network.by_id()
    features = []
    for agg in aggregates:
        seg = segments.get(agg.segment_id)
        if seg is None:
            raise ValueError(f"aggregate for unknown segment {agg.segment_id}")
        properties: dict[str, Any] = {
            "osm_way_id": seg.osm_way_id,
            "highway": seg.highway_tag,
            "surface_type": agg.surface_type.value if agg.surface_type else None,
            "quality_mean": agg.quality_mean,
            "quality_class": agg.quality_class.value if agg.quality_class else None,
            "status": agg.status.value,
            "n_subsegments": agg.n_subsegments,
            "n_classified": agg.n_classified,
            "image_count": agg.image_count,
        }
        if seg.name is not None:
            properties["name"] = seg.name
        features.append(
            {
                "type": "Feature",
                "id": f"way/{seg.segment_id}",
                "properties": properties,
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[v.lon, v.lat] for v in seg.geometry.vertices],
                },
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    _write_atomic(Path(path), json.dumps(doc, sort_keys=True) + "\n")


def export_csv(aggregates: Iterable[SegmentAggregate], path: str | Path) -> None:
    lines = ["segment_id,surface_type,quality_mean,quality_class,status"]
    for agg in aggregates:
        lines.append(
            ",".join(
                [
                    agg.segment_id,
                    agg.surface_type.value if agg.surface_type else "",
                    repr(agg.quality_mean) if agg.quality_mean is not None else "",
                    agg.quality_class.value if agg.quality_class else "",
                    agg.status.value,
                ]
            )
        )
    _write_atomic(Path(path), "\n".join(lines) + "\n")


def load_aggregates_csv(path: str | Path) -> list[SegmentAggregate]:
    """Read an exported CSV back for evaluation runs."""
    import csv as _csv

    from .predictions import QualityClass, SurfaceType

    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            out.append(
                SegmentAggregate(
                    segment_id=row["segment_id"],
                    n_subsegments=0,
                    n_classified=0,
                    image_count=0,
                    surface_type=SurfaceType(row["surface_type"]) if row["surface_type"] else None,
                    quality_mean=float(row["quality_mean"]) if row["quality_mean"] else None,
                    quality_class=QualityClass(row["quality_class"]) if row["quality_class"] else None,
                    status=SegmentStatus(row["status"]),
                )
            )
    return out
