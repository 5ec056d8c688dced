"""Two-level aggregation of image predictions onto road segments.

Level one buckets placed images into fixed-length chainage subsegments
and takes a strict-plurality surface-type vote with a minimum number of
agreeing classifications. Level two combines the classified subsegments
into one value per road segment, each subsegment counting equally no
matter how many images it holds, and requires a minimum classified
fraction. Anything below a threshold abstains rather than guessing.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .assignment import ImagePlacement
from .geo import LocalFrame, split_polyline
from .network import RoadNetwork, RoadSegment
from .predictions import Prediction, QualityClass, SurfaceType, quality_to_class

DEFAULT_SUBSEGMENT_LENGTH_M = 20.0
DEFAULT_MIN_AGREEING = 3
DEFAULT_MIN_FRACTION = 0.5

CHAINAGE_TOLERANCE_M = 1e-6


class SegmentStatus(str, Enum):
    OK = "ok"
    INSUFFICIENT_COVERAGE = "insufficient_coverage"
    AMBIGUOUS_TYPE = "ambiguous_type"
    NO_IMAGES = "no_images"


@dataclass(frozen=True)
class SubsegmentAggregate:
    segment_id: str
    sub_index: int
    start_chainage_m: float
    end_chainage_m: float
    image_count: int
    type_votes: Mapping[SurfaceType, int]
    surface_type: SurfaceType | None
    quality_mean: float | None
    quality_n: int


@dataclass(frozen=True)
class SegmentAggregate:
    segment_id: str
    n_subsegments: int
    n_classified: int
    image_count: int
    surface_type: SurfaceType | None
    quality_mean: float | None
    quality_class: QualityClass | None
    status: SegmentStatus


class ChainageError(ValueError):
    """Placement chainage outside the segment it claims to sit on."""


def _plurality_winner(votes: Counter) -> SurfaceType | None:
    """Strict plurality: a unique top vote count, otherwise abstain."""
    if not votes:
        return None
    ranked = votes.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return None
    return ranked[0][0]


def aggregate_subsegments(
    placements: Sequence[tuple[ImagePlacement, Prediction]],
    segment: RoadSegment,
    frame: LocalFrame,
    step: float = DEFAULT_SUBSEGMENT_LENGTH_M,
    min_agreeing: int = DEFAULT_MIN_AGREEING,
) -> list[SubsegmentAggregate]:
    """First aggregation level over one segment.

    Placements are bucketed by chainage into the segment's `step`-metre
    slices; a chainage exactly on a cut belongs to the later slice and
    the segment end belongs to the last. The surface type is the strict
    plurality of votes when the winner has at least `min_agreeing` of
    them. The quality mean averages only images voting for the winning
    type: a quality score is fitted per surface type, so it is only
    meaningful conditioned on that type.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if min_agreeing < 1:
        raise ValueError("min_agreeing must be >= 1")

    pieces = split_polyline(segment.geometry, step, frame)
    total = pieces[-1].end_chainage_m
    buckets: list[list[tuple[ImagePlacement, Prediction]]] = [[] for _ in pieces]
    for placement, prediction in placements:
        ch = placement.chainage_m
        if ch < -CHAINAGE_TOLERANCE_M or ch > total + CHAINAGE_TOLERANCE_M:
            raise ChainageError(
                f"image {placement.image_id}: chainage {ch} outside segment "
                f"{segment.segment_id} of length {total}"
            )
        bucket = min(max(int(ch // step), 0), len(pieces) - 1)
        buckets[bucket].append((placement, prediction))

    out: list[SubsegmentAggregate] = []
    for piece, pairs in zip(pieces, buckets):
        # Canonical image order keeps float sums bit-identical under any
        # permutation of the input.
        pairs.sort(key=lambda pair: pair[0].image_id)
        preds = [pred for _, pred in pairs]
        votes = Counter(p.surface_type for p in preds)
        winner = _plurality_winner(votes)
        if winner is not None and votes[winner] < min_agreeing:
            winner = None
        quality_mean = None
        quality_n = 0
        if winner is not None:
            qualities = [p.quality for p in preds if p.surface_type == winner]
            quality_n = len(qualities)
            quality_mean = sum(qualities) / quality_n
        out.append(
            SubsegmentAggregate(
                segment_id=segment.segment_id,
                sub_index=piece.sub_index,
                start_chainage_m=piece.start_chainage_m,
                end_chainage_m=piece.end_chainage_m,
                image_count=len(preds),
                type_votes=dict(votes),
                surface_type=winner,
                quality_mean=quality_mean,
                quality_n=quality_n,
            )
        )
    return out


def aggregate_segment(
    subs: Sequence[SubsegmentAggregate],
    min_fraction: float = DEFAULT_MIN_FRACTION,
) -> SegmentAggregate:
    """Second aggregation level: one value per road segment.

    Requires at least `min_fraction` of the subsegments to be classified
    (inclusive at the threshold), takes the mode of their types, and
    averages their quality means with equal weight per subsegment so a
    heavily photographed driveway cannot dominate the rating.
    """
    if not subs:
        raise ValueError("aggregate_segment needs at least one subsegment")
    if not 0.0 < min_fraction <= 1.0:
        raise ValueError("min_fraction must be in (0, 1]")
    segment_id = subs[0].segment_id
    if any(s.segment_id != segment_id for s in subs):
        raise ValueError("subsegments of several segments mixed together")

    image_count = sum(s.image_count for s in subs)
    classified = [s for s in subs if s.surface_type is not None]

    def missing(status: SegmentStatus) -> SegmentAggregate:
        return SegmentAggregate(
            segment_id=segment_id,
            n_subsegments=len(subs),
            n_classified=len(classified),
            image_count=image_count,
            surface_type=None,
            quality_mean=None,
            quality_class=None,
            status=status,
        )

    if image_count == 0:
        return missing(SegmentStatus.NO_IMAGES)
    if len(classified) / len(subs) < min_fraction:
        return missing(SegmentStatus.INSUFFICIENT_COVERAGE)

    winner = _plurality_winner(Counter(s.surface_type for s in classified))
    if winner is None:
        return missing(SegmentStatus.AMBIGUOUS_TYPE)

    quality_mean = sum(s.quality_mean for s in classified) / len(classified)
    return SegmentAggregate(
        segment_id=segment_id,
        n_subsegments=len(subs),
        n_classified=len(classified),
        image_count=image_count,
        surface_type=winner,
        quality_mean=quality_mean,
        quality_class=quality_to_class(quality_mean),
        status=SegmentStatus.OK,
    )


def aggregate_network(
    placements: Iterable[ImagePlacement],
    predictions: Mapping[str, Prediction],
    network: RoadNetwork,
    step: float = DEFAULT_SUBSEGMENT_LENGTH_M,
    min_agreeing: int = DEFAULT_MIN_AGREEING,
    min_fraction: float = DEFAULT_MIN_FRACTION,
) -> list[SegmentAggregate]:
    """Run both levels over the whole network, one aggregate per segment,
    ordered by segment_id."""
    by_segment: dict[str, list[tuple[ImagePlacement, Prediction]]] = {}
    for placement in placements:
        pred = predictions.get(placement.image_id)
        if pred is None:
            raise KeyError(f"placement for unknown image {placement.image_id}")
        by_segment.setdefault(placement.segment_id, []).append((placement, pred))

    out = []
    for segment in sorted(network.segments, key=lambda s: s.segment_id):
        subs = aggregate_subsegments(
            by_segment.get(segment.segment_id, []),
            segment,
            network.frame,
            step=step,
            min_agreeing=min_agreeing,
        )
        out.append(aggregate_segment(subs, min_fraction=min_fraction))
    return out
