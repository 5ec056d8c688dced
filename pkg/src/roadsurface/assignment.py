"""Assign predicted images to road segments.

Each image lands on at most one segment: grid-index candidates within
the assignment radius are refined by exact projection, then ambiguity
between several nearby segments is resolved with the image's predicted
road type, falling back to plain nearest when nothing matches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .geo import GridIndex, project_point_to_polyline, query_index
from .imagery import ImageRecord
from .network import RoadNetwork, RoadSegment
from .predictions import Prediction, RoadType


class Disambiguation(str, Enum):
    SINGLE_CANDIDATE = "single_candidate"
    ROAD_TYPE_MATCH = "road_type_match"
    NEAREST_FALLBACK = "nearest_fallback"


class DiscardReason(str, Enum):
    NO_FOCUS = "no_focus"
    OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class ImagePlacement:
    image_id: str
    segment_id: str
    chainage_m: float
    distance_m: float
    disambiguation: Disambiguation


@dataclass
class DiscardReport:
    reasons: dict[str, DiscardReason] = field(default_factory=dict)

    def add(self, image_id: str, reason: DiscardReason) -> None:
        self.reasons[image_id] = reason

    def count(self, reason: DiscardReason) -> int:
        return sum(1 for r in self.reasons.values() if r is reason)

    def __len__(self) -> int:
        return len(self.reasons)


def segment_accepts_road_type(segment: RoadSegment, road_type: RoadType) -> bool:
    """True when the image's predicted road type is consistent with the
    segment. `bike_lane` has no own OSM way; it matches roadway segments
    carrying a `cycleway=lane` tag."""
    if segment.mapped_road_type is None:
        return False
    if segment.mapped_road_type == road_type:
        return True
    return (
        road_type == RoadType.BIKE_LANE
        and segment.mapped_road_type == RoadType.ROADWAY
        and segment.tags.get("cycleway") == "lane"
    )


@dataclass(frozen=True)
class _Candidate:
    segment_id: str
    distance_m: float
    chainage_m: float

    @property
    def order(self) -> tuple[float, str]:
        return (self.distance_m, self.segment_id)


def assign_images(
    images: Sequence[tuple[ImageRecord, Prediction]],
    network: RoadNetwork,
    index: GridIndex,
    radius: float,
) -> tuple[list[ImagePlacement], DiscardReport]:
    """Place every predicted image on at most one segment.

    Discards are data, not errors: `no_focus` predictions carry no usable
    surface information, and images farther than `radius` from every
    segment are out of range. Output is sorted by image_id, so input
    order never matters.
    """
    segments = network.by_id()
    placements: list[ImagePlacement] = []
    report = DiscardReport()

    for record, prediction in images:
        if prediction.road_type == RoadType.NO_FOCUS:
            report.add(record.image_id, DiscardReason.NO_FOCUS)
            continue

        candidates: list[_Candidate] = []
        for seg_id in query_index(index, record.position, radius):
            seg = segments[seg_id]
            proj = project_point_to_polyline(record.position, seg.geometry, network.frame)
            if proj.distance_m <= radius:
                candidates.append(_Candidate(seg_id, proj.distance_m, proj.chainage_m))

        if not candidates:
            report.add(record.image_id, DiscardReason.OUT_OF_RANGE)
            continue

        if len(candidates) == 1:
            chosen, how = candidates[0], Disambiguation.SINGLE_CANDIDATE
        else:
            matching = [
                c
                for c in candidates
                if segment_accepts_road_type(segments[c.segment_id], prediction.road_type)
            ]
            if matching:
                chosen, how = min(matching, key=lambda c: c.order), Disambiguation.ROAD_TYPE_MATCH
            else:
                chosen, how = min(candidates, key=lambda c: c.order), Disambiguation.NEAREST_FALLBACK

        placements.append(
            ImagePlacement(
                image_id=record.image_id,
                segment_id=chosen.segment_id,
                chainage_m=chosen.chainage_m,
                distance_m=chosen.distance_m,
                disambiguation=how,
            )
        )

    placements.sort(key=lambda p: p.image_id)
    return placements, report


def write_placements_csv(path: str | Path, placements: Iterable[ImagePlacement]) -> None:
    """Audit dump of where every image went."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "segment_id", "chainage_m", "distance_m", "disambiguation"])
        for p in placements:
            writer.writerow(
                [p.image_id, p.segment_id, f"{p.chainage_m:.3f}", f"{p.distance_m:.3f}", p.disambiguation.value]
            )
