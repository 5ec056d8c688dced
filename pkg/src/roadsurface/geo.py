"""Planar-approximation geodesy: distances, point-to-line projection,
polyline splitting and a uniform grid index over road segments.

All metric math runs in an equirectangular local frame anchored at the
area of interest. Road segments span at most a few kilometres, where the
projection error is far below the geotag noise we have to live with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

EARTH_RADIUS_M = 6_371_008.8  # IUGG mean radius
METERS_PER_DEG_LAT = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 position, longitude first."""

    lon: float
    lat: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate: ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")


@dataclass(frozen=True)
class LocalFrame:
    """Equirectangular projection around an origin, axes in metres."""

    origin: GeoPoint
    meters_per_deg_lon: float
    meters_per_deg_lat: float

    @classmethod
    def at(cls, origin: GeoPoint) -> "LocalFrame":
        return cls(
            origin=origin,
            meters_per_deg_lon=METERS_PER_DEG_LAT * math.cos(math.radians(origin.lat)),
            meters_per_deg_lat=METERS_PER_DEG_LAT,
        )

    def to_xy(self, p: GeoPoint) -> tuple[float, float]:
        """Project to local planar coordinates in metres."""
        return (
            (p.lon - self.origin.lon) * self.meters_per_deg_lon,
            (p.lat - self.origin.lat) * self.meters_per_deg_lat,
        )

    def to_point(self, x: float, y: float) -> GeoPoint:
        """Inverse of :meth:`to_xy`."""
        return GeoPoint(
            lon=self.origin.lon + x / self.meters_per_deg_lon,
            lat=self.origin.lat + y / self.meters_per_deg_lat,
        )


@dataclass(frozen=True)
class Polyline:
    """Ordered vertex chain; consecutive duplicate vertices are removed at
    construction so every edge has positive length."""

    vertices: tuple[GeoPoint, ...]

    def __init__(self, vertices: Iterable[GeoPoint]) -> None:
        deduped: list[GeoPoint] = []
        for v in vertices:
            if not deduped or v != deduped[-1]:
                deduped.append(v)
        if len(deduped) < 2:
            raise ValueError("polyline needs at least 2 distinct vertices")
        object.__setattr__(self, "vertices", tuple(deduped))

    def __len__(self) -> int:
        return len(self.vertices)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in metres on the mean-radius sphere."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def polyline_xy(line: Polyline, frame: LocalFrame) -> list[tuple[float, float]]:
    return [frame.to_xy(v) for v in line.vertices]


def polyline_length_m(line: Polyline, frame: LocalFrame) -> float:
    """Planar length of the polyline in the given frame."""
    xy = polyline_xy(line, frame)
    return sum(math.dist(xy[i], xy[i + 1]) for i in range(len(xy) - 1))


@dataclass(frozen=True)
class Projection:
    """Result of projecting a point onto a polyline."""

    distance_m: float
    chainage_m: float
    foot: GeoPoint


def project_point_to_polyline(p: GeoPoint, line: Polyline, frame: LocalFrame) -> Projection:
    """Closest point on `line` to `p`, planar in `frame`.

    Returns the minimum distance, the along-line chainage of the foot
    point and the foot point itself. Points beyond either end clamp to
    the end vertices.
    """
    px, py = frame.to_xy(p)
    xy = polyline_xy(line, frame)

    best_d2 = math.inf
    best_chainage = 0.0
    best_foot = xy[0]
    cum = 0.0
    for i in range(len(xy) - 1):
        ax, ay = xy[i]
        bx, by = xy[i + 1]
        ex, ey = bx - ax, by - ay
        edge_len2 = ex * ex + ey * ey
        t = ((px - ax) * ex + (py - ay) * ey) / edge_len2
        t = min(1.0, max(0.0, t))
        fx, fy = ax + t * ex, ay + t * ey
        d2 = (px - fx) ** 2 + (py - fy) ** 2
        if d2 < best_d2:
            best_d2 = d2
            best_chainage = cum + t * math.sqrt(edge_len2)
            best_foot = (fx, fy)
        cum += math.sqrt(edge_len2)

    return Projection(
        distance_m=math.sqrt(best_d2),
        chainage_m=best_chainage,
        foot=frame.to_point(*best_foot),
    )


def point_at_chainage(line: Polyline, chainage: float, frame: LocalFrame) -> GeoPoint:
    """Point on the line at the given along-line distance, clamped to the
    ends."""
    xy = polyline_xy(line, frame)
    if chainage <= 0:
        return line.vertices[0]
    cum = 0.0
    for i in range(len(xy) - 1):
        edge_len = math.dist(xy[i], xy[i + 1])
        if cum + edge_len >= chainage:
            t = (chainage - cum) / edge_len
            ax, ay = xy[i]
            bx, by = xy[i + 1]
            return frame.to_point(ax + t * (bx - ax), ay + t * (by - ay))
        cum += edge_len
    return line.vertices[-1]


@dataclass(frozen=True)
class SubPolyline:
    sub_index: int
    line: Polyline
    start_chainage_m: float
    end_chainage_m: float


def split_polyline(line: Polyline, step: float, frame: LocalFrame) -> list[SubPolyline]:
    """Partition a polyline into chainage slices of `step` metres.

    Every piece except the last has length exactly `step`; the last
    carries the remainder. A line no longer than `step` comes back as a
    single piece. Cut points are interpolated on the edges, so
    re-concatenating the pieces reproduces the original vertex sequence
    with only the cut points inserted.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    xy = polyline_xy(line, frame)
    total = sum(math.dist(xy[i], xy[i + 1]) for i in range(len(xy) - 1))
    # Guard against float fuzz creating a sliver piece when the length is
    # an exact multiple of the step.
    n_pieces = max(1, math.ceil(total / step - 1e-9))

    pieces: list[SubPolyline] = []
    current: list[tuple[float, float]] = [xy[0]]
    piece_start = 0.0
    cum = 0.0
    edge_i = 0
    while len(pieces) < n_pieces - 1:
        cut_at = (len(pieces) + 1) * step
        ax, ay = xy[edge_i]
        bx, by = xy[edge_i + 1]
        edge_len = math.dist((ax, ay), (bx, by))
        if cum + edge_len < cut_at - 1e-12:
            cum += edge_len
            edge_i += 1
            current.append((bx, by))
            continue
        t = (cut_at - cum) / edge_len
        cut = (ax + t * (bx - ax), ay + t * (by - ay))
        current.append(cut)
        pieces.append(_make_piece(len(pieces), current, piece_start, cut_at, frame))
        piece_start = cut_at
        current = [cut]
        if t >= 1.0 - 1e-12:
            cum += edge_len
            edge_i += 1

    current.extend(xy[edge_i + 1:])
    pieces.append(_make_piece(len(pieces), current, piece_start, total, frame))
    return pieces


def _make_piece(
    index: int,
    xy: Sequence[tuple[float, float]],
    start: float,
    end: float,
    frame: LocalFrame,
) -> SubPolyline:
    return SubPolyline(
        sub_index=index,
        line=Polyline(frame.to_point(x, y) for x, y in xy),
        start_chainage_m=start,
        end_chainage_m=end,
    )


@dataclass(frozen=True)
class GridIndex:
    """Uniform grid over segment bounding boxes expanded by the build
    radius; queries at any radius up to that bound never miss a segment,
    though they may return false positives for the caller to refine."""

    cell_size: float
    radius: float
    frame: LocalFrame
    cells: dict[tuple[int, int], tuple[str, ...]] = field(default_factory=dict)


def build_index(
    segments: Iterable[tuple[str, Polyline]],
    cell_size: float,
    radius: float,
    frame: LocalFrame,
) -> GridIndex:
    """Index segment geometries for radius queries up to `radius`."""
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    if radius < 0:
        raise ValueError("radius must be non-negative")
    staging: dict[tuple[int, int], list[str]] = {}
    for seg_id, line in segments:
        xs, ys = zip(*polyline_xy(line, frame))
        ix0 = math.floor((min(xs) - radius) / cell_size)
        ix1 = math.floor((max(xs) + radius) / cell_size)
        iy0 = math.floor((min(ys) - radius) / cell_size)
        iy1 = math.floor((max(ys) + radius) / cell_size)
        for ix in range(ix0, ix1 + 1):
            for iy in range(iy0, iy1 + 1):
                staging.setdefault((ix, iy), []).append(seg_id)
    cells = {key: tuple(ids) for key, ids in staging.items()}
    return GridIndex(cell_size=cell_size, radius=radius, frame=frame, cells=cells)


def query_index(index: GridIndex, p: GeoPoint, radius: float) -> list[str]:
    """Candidate segment ids within `radius` of `p` (superset, sorted)."""
    if radius > index.radius:
        raise ValueError(
            f"query radius {radius} exceeds index build radius {index.radius}"
        )
    px, py = index.frame.to_xy(p)
    ix0 = math.floor((px - radius) / index.cell_size)
    ix1 = math.floor((px + radius) / index.cell_size)
    iy0 = math.floor((py - radius) / index.cell_size)
    iy1 = math.floor((py + radius) / index.cell_size)
    found: set[str] = set()
    for ix in range(ix0, ix1 + 1):
        for iy in range(iy0, iy1 + 1):
            found.update(index.cells.get((ix, iy), ()))
    return sorted(found)
