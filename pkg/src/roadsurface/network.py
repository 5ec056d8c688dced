"""OSM road network ingestion.

Two ingestion paths produce the same normalized `RoadNetwork`: GeoJSON
FeatureCollections (RFC 7946) and Overpass API JSON in its `out geom`
form. Ways keep their OSM tags; the `highway` tag is mapped onto the
image classifier's road-type taxonomy for later disambiguation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .geo import GeoPoint, LocalFrame, Polyline, polyline_length_m
from .predictions import RoadType

# This mapping is deployment configuration, not OSM doctrine: tagging
# conventions differ between municipalities, so callers may override it.
DEFAULT_HIGHWAY_ROAD_TYPE: dict[str, RoadType] = {
    "motorway": RoadType.ROADWAY,
    "trunk": RoadType.ROADWAY,
    "primary": RoadType.ROADWAY,
    "secondary": RoadType.ROADWAY,
    "tertiary": RoadType.ROADWAY,
    "residential": RoadType.ROADWAY,
    "unclassified": RoadType.ROADWAY,
    "service": RoadType.ROADWAY,
    "living_street": RoadType.ROADWAY,
    "cycleway": RoadType.CYCLEWAY,
    "footway": RoadType.SIDEWALK,
    "pedestrian": RoadType.SIDEWALK,
    "path": RoadType.PATH,
    "track": RoadType.PATH,
    "bridleway": RoadType.PATH,
}


def map_highway_to_road_type(
    highway_tag: str,
    other_tags: Mapping[str, str] | None = None,
    mapping: Mapping[str, RoadType] | None = None,
) -> RoadType | None:
    """Map an OSM highway tag to a road-type class, None when unknown."""
    table = DEFAULT_HIGHWAY_ROAD_TYPE if mapping is None else mapping
    return table.get(highway_tag)


class NetworkParseError(ValueError):
    """Input document is not a road network we can read."""


class BoundaryError(ValueError):
    """Boundary specification unusable."""


@dataclass(frozen=True)
class Boundary:
    """Area of interest: always a bbox, optionally the polygon it came from."""

    bbox: tuple[float, float, float, float]  # min_lon, min_lat, max_lon, max_lat
    ring: tuple[GeoPoint, ...] | None = None

    def __post_init__(self) -> None:
        min_lon, min_lat, max_lon, max_lat = self.bbox
        if not (min_lon < max_lon and min_lat < max_lat):
            raise BoundaryError(f"degenerate bbox: {self.bbox}")
        GeoPoint(min_lon, min_lat)
        GeoPoint(max_lon, max_lat)

    @classmethod
    def from_bbox_string(cls, s: str) -> "Boundary":
        parts = s.split(",")
        if len(parts) != 4:
            raise BoundaryError(f"bbox must be minLon,minLat,maxLon,maxLat: {s!r}")
        try:
            values = tuple(float(p) for p in parts)
        except ValueError:
            raise BoundaryError(f"non-numeric bbox: {s!r}") from None
        return cls(bbox=values)

    @classmethod
    def from_polygon_geojson(cls, doc: str | bytes | Mapping[str, Any]) -> "Boundary":
        obj = json.loads(doc) if isinstance(doc, (str, bytes)) else doc
        if obj.get("type") == "Feature":
            obj = obj.get("geometry") or {}
        if obj.get("type") != "Polygon":
            raise BoundaryError(f"boundary must be a GeoJSON Polygon, got {obj.get('type')!r}")
        try:
            ring = tuple(GeoPoint(float(lon), float(lat)) for lon, lat in obj["coordinates"][0])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BoundaryError(f"bad polygon coordinates: {exc}") from None
        if len(ring) < 3:
            raise BoundaryError("polygon ring needs at least 3 points")
        lons = [p.lon for p in ring]
        lats = [p.lat for p in ring]
        return cls(bbox=(min(lons), min(lats), max(lons), max(lats)), ring=ring)

    @classmethod
    def from_spec(cls, spec: str) -> "Boundary":
        """Accept either a bbox string or a path to a polygon GeoJSON file."""
        if Path(spec).exists():
            return cls.from_polygon_geojson(Path(spec).read_text(encoding="utf-8"))
        return cls.from_bbox_string(spec)

    def center(self) -> GeoPoint:
        min_lon, min_lat, max_lon, max_lat = self.bbox
        return GeoPoint((min_lon + max_lon) / 2.0, (min_lat + max_lat) / 2.0)

    def contains(self, p: GeoPoint) -> bool:
        min_lon, min_lat, max_lon, max_lat = self.bbox
        return min_lon <= p.lon <= max_lon and min_lat <= p.lat <= max_lat

    def bbox_intersects(self, points: Iterable[GeoPoint]) -> bool:
        min_lon, min_lat, max_lon, max_lat = self.bbox
        lons = [p.lon for p in points]
        lats = [p.lat for p in points]
        return not (
            max(lons) < min_lon
            or min(lons) > max_lon
            or max(lats) < min_lat
            or min(lats) > max_lat
        )


@dataclass(frozen=True)
class RoadSegment:
    """One OSM way (or MultiLineString part), the aggregation unit."""

    segment_id: str
    osm_way_id: int
    geometry: Polyline
    tags: Mapping[str, str]
    mapped_road_type: RoadType | None
    length_m: float

    @property
    def highway_tag(self) -> str:
        return self.tags.get("highway", "")

    @property
    def name(self) -> str | None:
        return self.tags.get("name")


@dataclass
class ParseWarnings:
    non_line_skipped: int = 0
    missing_geometry_skipped: int = 0
    degenerate_skipped: int = 0
    dropped_no_highway: int = 0
    dropped_outside_boundary: int = 0


@dataclass(frozen=True)
class RoadNetwork:
    segments: tuple[RoadSegment, ...]
    boundary: Boundary
    frame: LocalFrame
    warnings: ParseWarnings = field(default_factory=ParseWarnings, compare=False)

    def by_id(self) -> dict[str, RoadSegment]:
        return {s.segment_id: s for s in self.segments}


def _way_id_from_feature(feature: Mapping[str, Any], fallback_index: int) -> tuple[int, str | None]:
    """Extract the OSM way id and, when present, an explicit segment id.

    Understands `way/123` style feature ids (optionally carrying our own
    `#part` suffix from a previous export) and the usual property spellings.
    Features without any id get a synthetic negative id so they can never
    collide with genuine OSM ids.
    """
    props = feature.get("properties") or {}
    raw = feature.get("id")
    if raw is None:
        raw = props.get("@id", props.get("osm_id", props.get("id")))
    if raw is None:
        return -(fallback_index + 1), None
    text = str(raw)
    if "/" in text:
        text = text.rsplit("/", 1)[1]
    segment_id = None
    base = text
    if "#" in text:
        segment_id = text
        base = text.split("#", 1)[0]
    try:
        return int(base), segment_id
    except ValueError:
        return -(fallback_index + 1), None


def _normalize_tags(props: Mapping[str, Any]) -> dict[str, str]:
    return {
        str(k): str(v)
        for k, v in props.items()
        if v is not None and not str(k).startswith("@")
    }


class _NetworkBuilder:
    """Shared normalization for both parsers."""

    def __init__(self, boundary: Boundary, mapping: Mapping[str, RoadType] | None = None) -> None:
        self.boundary = boundary
        self.mapping = mapping
        self.frame = LocalFrame.at(boundary.center())
        self.warnings = ParseWarnings()
        self.segments: list[RoadSegment] = []
        self._taken: set[str] = set()

    def _unique_id(self, candidate: str) -> str:
        seg_id = candidate
        bump = 1
        while seg_id in self._taken:
            seg_id = f"{candidate}+{bump}"
            bump += 1
        self._taken.add(seg_id)
        return seg_id

    def add_way(
        self,
        way_id: int,
        tags: dict[str, str],
        lines: list[list[tuple[float, float]]],
        explicit_segment_id: str | None = None,
    ) -> None:
        if "highway" not in tags:
            self.warnings.dropped_no_highway += 1
            return
        multi = len(lines) > 1
        for part_index, coords in enumerate(lines):
            points = [GeoPoint(float(lon), float(lat)) for lon, lat in coords]
            try:
                geometry = Polyline(points)
            except ValueError:
                self.warnings.degenerate_skipped += 1
                continue
            if not self.boundary.bbox_intersects(geometry.vertices):
                self.warnings.dropped_outside_boundary += 1
                continue
            if explicit_segment_id is not None and not multi:
                candidate = explicit_segment_id
            elif multi:
                candidate = f"{way_id}#{part_index}"
            else:
                candidate = str(way_id)
            self.segments.append(
                RoadSegment(
                    segment_id=self._unique_id(candidate),
                    osm_way_id=way_id,
                    geometry=geometry,
                    tags=tags,
                    mapped_road_type=map_highway_to_road_type(tags["highway"], tags, self.mapping),
                    length_m=polyline_length_m(geometry, self.frame),
                )
            )

    def build(self) -> RoadNetwork:
        return RoadNetwork(
            segments=tuple(self.segments),
            boundary=self.boundary,
            frame=self.frame,
            warnings=self.warnings,
        )


def parse_network_geojson(
    doc: bytes | str,
    boundary: Boundary,
    mapping: Mapping[str, RoadType] | None = None,
) -> RoadNetwork:
    """Parse a GeoJSON FeatureCollection of OSM ways into a RoadNetwork.

    Features without a `highway` tag are dropped; non-line geometries are
    skipped with a warning count; MultiLineString parts become separate
    segments with `#<part>` suffixed ids. `mapping` overrides the default
    highway to road-type table.
    """
    try:
        obj = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict) or obj.get("type") != "FeatureCollection":
        raise NetworkParseError("document is not a GeoJSON FeatureCollection")
    features = obj.get("features")
    if not isinstance(features, list):
        raise NetworkParseError("FeatureCollection has no features array")

    builder = _NetworkBuilder(boundary, mapping)
    for i, feature in enumerate(features):
        if not isinstance(feature, dict):
            raise NetworkParseError(f"feature {i} is not an object")
        geometry = feature.get("geometry") or {}
        gtype = geometry.get("type")
        if gtype == "LineString":
            lines = [geometry.get("coordinates", [])]
        elif gtype == "MultiLineString":
            lines = list(geometry.get("coordinates", []))
        else:
            builder.warnings.non_line_skipped += 1
            continue
        way_id, explicit = _way_id_from_feature(feature, i)
        try:
            builder.add_way(way_id, _normalize_tags(feature.get("properties") or {}), lines, explicit)
        except (TypeError, ValueError) as exc:
            raise NetworkParseError(f"feature {i} (way {way_id}): bad coordinates: {exc}") from exc
    return builder.build()


def parse_overpass_json(
    doc: bytes | str,
    boundary: Boundary,
    mapping: Mapping[str, RoadType] | None = None,
) -> RoadNetwork:
    """Parse an Overpass `out geom` response into a RoadNetwork."""
    try:
        obj = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict) or not isinstance(obj.get("elements"), list):
        raise NetworkParseError("document is not an Overpass response with elements")

    builder = _NetworkBuilder(boundary, mapping)
    for i, element in enumerate(obj["elements"]):
        if not isinstance(element, dict) or element.get("type") != "way":
            continue
        way_id = int(element.get("id", -(i + 1)))
        geom = element.get("geometry")
        if not geom:
            builder.warnings.missing_geometry_skipped += 1
            continue
        try:
            coords = [(float(p["lon"]), float(p["lat"])) for p in geom]
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkParseError(f"way {way_id}: bad geometry: {exc}") from exc
        builder.add_way(way_id, _normalize_tags(element.get("tags") or {}), [coords])
    return builder.build()


def looks_like_overpass(doc: bytes | str) -> bool:
    """Cheap format sniff so the CLI can accept either network format."""
    try:
        obj = json.loads(doc)
    except json.JSONDecodeError:
        return False
    return isinstance(obj, dict) and "elements" in obj and obj.get("type") != "FeatureCollection"


def network_to_feature_collection(network: RoadNetwork) -> dict[str, Any]:
    """Export back to GeoJSON; segment ids survive a round trip."""
    features = []
    for seg in network.segments:
        features.append(
            {
                "type": "Feature",
                "id": f"way/{seg.segment_id}",
                "properties": dict(seg.tags),
                "geometry": {
                    "type": "LineString",
                    "coordinates": [[v.lon, v.lat] for v in seg.geometry.vertices],
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}
