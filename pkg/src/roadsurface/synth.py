"""Seeded synthetic scenarios: road networks with known ground truth,
images scattered along them, and noisy predictions.

This is the oracle substrate for assignment and aggregation tests: every
generated artifact round-trips through the same file formats the real
pipeline consumes, and the hidden truth (per-segment surface/quality,
per-image true chainage) stays available in memory for exact checks.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .geo import GeoPoint, LocalFrame, Polyline, point_at_chainage, split_polyline
from .imagery import ImageRecord, write_image_records
from .network import Boundary, RoadNetwork, parse_network_geojson
from .predictions import (
    Prediction,
    QUALITY_MAX,
    QUALITY_MIN,
    RoadType,
    SurfaceType,
    quality_to_class,
    write_predictions_file,
)

# Base anchor somewhere mid-latitude; the exact spot is irrelevant, the
# frame math just should not run at the equator where cos(lat) is 1.
_ORIGIN = GeoPoint(13.40, 52.50)
_ROW_SPACING_M = 30.0  # >= 25 m keeps low-noise assignment unambiguous
_PARALLEL_OFFSET_M = 4.0
_CAPTURED_AT_BASE_MS = 1_700_000_000_000

_HIGHWAY_CHOICES = ["residential", "secondary", "tertiary", "unclassified"]


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    n_segments: int = 50
    segment_length_range: tuple[float, float] = (60.0, 200.0)
    images_per_subsegment_range: tuple[int, int] = (3, 6)
    type_noise_rate: float = 0.0
    quality_noise_sd: float = 0.0
    geotag_noise_sd_m: float = 0.0
    drop_rate: float = 0.0
    subsegment_length_m: float = 20.0
    parallel_roads: bool = False

    def __post_init__(self) -> None:
        for name in ("type_noise_rate", "drop_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of [0,1]: {v}")
        if self.quality_noise_sd < 0 or self.geotag_noise_sd_m < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if self.n_segments < 1:
            raise ValueError("n_segments must be >= 1")
        lo, hi = self.segment_length_range
        if not 0 < lo <= hi:
            raise ValueError(f"bad segment_length_range: {self.segment_length_range}")
        ilo, ihi = self.images_per_subsegment_range
        if not 0 <= ilo <= ihi:
            raise ValueError(f"bad images_per_subsegment_range: {self.images_per_subsegment_range}")


@dataclass(frozen=True)
class SegmentTruth:
    surface_type: SurfaceType
    quality: float
    road_type: RoadType


@dataclass
class Scenario:
    spec: ScenarioSpec
    boundary: Boundary
    network: RoadNetwork
    truth: dict[str, SegmentTruth]
    images: list[ImageRecord]
    predictions: dict[str, Prediction]
    true_placements: dict[str, tuple[str, float]] = field(default_factory=dict)

    def write(self, directory: str | Path) -> dict[str, Path]:
        """Write the scenario in exactly the formats the pipeline reads."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {
            "network": d / "network.geojson",
            "images": d / "images.jsonl",
            "predictions": d / "predictions.csv",
            "truth": d / "truth.csv",
            "bbox": d / "bbox.txt",
        }
        doc = _network_doc(self.network)
        paths["network"].write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
        write_image_records(paths["images"], self.images)
        write_predictions_file(
            paths["predictions"],
            [self.predictions[r.image_id] for r in self.images],
        )
        with paths["truth"].open("w", encoding="utf-8") as fh:
            fh.write("segment_id,true_surface_type,true_quality_class\n")
            for seg_id in sorted(self.truth):
                t = self.truth[seg_id]
                fh.write(
                    f"{seg_id},{t.surface_type.value},{quality_to_class(t.quality).value}\n"
                )
        paths["bbox"].write_text(",".join(repr(v) for v in self.boundary.bbox), encoding="utf-8")
        return paths


def _network_doc(network: RoadNetwork) -> dict[str, Any]:
    from .network import network_to_feature_collection

    return network_to_feature_collection(network)


def _gentle_polyline(
    rng: random.Random,
    frame: LocalFrame,
    x0: float,
    y0: float,
    length: float,
) -> Polyline:
    """A straight or gently curved east-west run of vertices ~20 m apart.

    The curve is a low triangle bump (max 2 m) so neighbouring rows stay
    far apart and chainage stays within a hair of the x distance.
    """
    amplitude = rng.uniform(0.0, 2.0) if rng.random() < 0.5 else 0.0
    n_vertices = max(2, int(length // 20) + 1)
    points = []
    for k in range(n_vertices):
        t = k / (n_vertices - 1)
        x = x0 + t * length
        y = y0 + amplitude * (1 - abs(2 * t - 1))  # triangle bump, piecewise linear
        points.append(frame.to_point(x, y))
    return Polyline(points)


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Deterministic scenario for the given spec; same seed, same bytes."""
    rng = random.Random(spec.seed)
    frame = LocalFrame.at(_ORIGIN)

    rows: list[dict[str, Any]] = []
    way_id = 0
    for i in range(spec.n_segments):
        way_id += 1
        length = rng.uniform(*spec.segment_length_range)
        x0 = rng.uniform(0.0, 10.0)
        y0 = i * _ROW_SPACING_M * (2 if spec.parallel_roads else 1)
        highway = rng.choice(_HIGHWAY_CHOICES)
        line = _gentle_polyline(rng, frame, x0, y0, length)
        rows.append({"way_id": way_id, "highway": highway, "line": line, "road_type": RoadType.ROADWAY})
        if spec.parallel_roads:
            way_id += 1
            # Straight companion cycleway a handful of metres away: close
            # enough that images sit near both, so road-type
            # disambiguation has to do the work.
            cyc = Polyline(
                [
                    frame.to_point(x0, y0 + _PARALLEL_OFFSET_M),
                    frame.to_point(x0 + length, y0 + _PARALLEL_OFFSET_M),
                ]
            )
            rows.append({"way_id": way_id, "highway": "cycleway", "line": cyc, "road_type": RoadType.CYCLEWAY})

    features = []
    for row in rows:
        features.append(
            {
                "type": "Feature",
                "id": f"way/{row['way_id']}",
                "properties": {"highway": row["highway"], "name": f"synth {row['way_id']}"},
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[v.lon, v.lat] for v in row["line"].vertices],
                },
            }
        )
    doc = {"type": "FeatureCollection", "features": features}

    lons = [v.lon for row in rows for v in row["line"].vertices]
    lats = [v.lat for row in rows for v in row["line"].vertices]
    margin = 0.002  # ~100-200 m
    boundary = Boundary(
        bbox=(min(lons) - margin, min(lats) - margin, max(lons) + margin, max(lats) + margin)
    )
    network = parse_network_geojson(json.dumps(doc), boundary)
    segments = network.by_id()

    truth: dict[str, SegmentTruth] = {}
    images: list[ImageRecord] = []
    predictions: dict[str, Prediction] = {}
    true_placements: dict[str, tuple[str, float]] = {}
    counter = 0
    surface_classes = list(SurfaceType)

    for row in rows:
        seg_id = str(row["way_id"])
        segment = segments[seg_id]
        seg_truth = SegmentTruth(
            surface_type=rng.choice(surface_classes),
            quality=rng.uniform(1.1, 4.9),
            road_type=row["road_type"],
        )
        truth[seg_id] = seg_truth

        for piece in split_polyline(segment.geometry, spec.subsegment_length_m, network.frame):
            if spec.drop_rate and rng.random() < spec.drop_rate:
                continue
            n_images = rng.randint(*spec.images_per_subsegment_range)
            for _ in range(n_images):
                counter += 1
                chainage = rng.uniform(piece.start_chainage_m, piece.end_chainage_m)
                on_line = point_at_chainage(segment.geometry, chainage, network.frame)
                x, y = network.frame.to_xy(on_line)
                if spec.geotag_noise_sd_m:
                    x += rng.gauss(0.0, spec.geotag_noise_sd_m)
                    y += rng.gauss(0.0, spec.geotag_noise_sd_m)
                image_id = f"img{counter:07d}"
                images.append(
                    ImageRecord(
                        image_id=image_id,
                        position=network.frame.to_point(x, y),
                        captured_at=_CAPTURED_AT_BASE_MS + counter * 1000,
                        creator="synth",
                        sequence_id=f"seq{seg_id}",
                        camera_heading=rng.uniform(0.0, 360.0) % 360.0,
                    )
                )
                surface = seg_truth.surface_type
                if spec.type_noise_rate and rng.random() < spec.type_noise_rate:
                    surface = rng.choice([c for c in surface_classes if c != surface])
                quality = seg_truth.quality
                if spec.quality_noise_sd:
                    quality = min(QUALITY_MAX, max(QUALITY_MIN, quality + rng.gauss(0.0, spec.quality_noise_sd)))
                predictions[image_id] = Prediction(
                    image_id=image_id,
                    road_type=seg_truth.road_type,
                    road_type_conf=0.9,
                    surface_type=surface,
                    surface_type_conf=0.9,
                    quality=quality,
                )
                true_placements[image_id] = (seg_id, chainage)

    return Scenario(
        spec=spec,
        boundary=boundary,
        network=network,
        truth=truth,
        images=images,
        predictions=predictions,
        true_placements=true_placements,
    )
