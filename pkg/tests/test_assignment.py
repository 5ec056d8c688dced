from __future__ import annotations

import json
import random

import pytest

import oracles
from roadsurface.assignment import (
    Disambiguation,
    DiscardReason,
    assign_images,
    write_placements_csv,
)
from roadsurface.geo import GeoPoint, LocalFrame, build_index
from roadsurface.imagery import ImageRecord
from roadsurface.network import Boundary, parse_network_geojson
from roadsurface.predictions import Prediction, RoadType, SurfaceType
from roadsurface.synth import ScenarioSpec, generate_scenario

BOUNDARY = Boundary.from_bbox_string("13.35,52.50,13.45,52.56")
FRAME = LocalFrame.at(BOUNDARY.center())


def build_network(*features):
    doc = {"type": "FeatureCollection", "features": list(features)}
    return parse_network_geojson(json.dumps(doc), BOUNDARY)


def feat(way_id, highway, xy_coords, **tags):
    coords = []
    for x, y in xy_coords:
        p = FRAME.to_point(x, y)
        coords.append([p.lon, p.lat])
    return {
        "type": "Feature",
        "id": f"way/{way_id}",
        "properties": {"highway": highway, **tags},
        "geometry": {"type": "LineString", "coordinates": coords},
    }


def image_at(image_id, x, y):
    return ImageRecord(image_id, FRAME.to_point(x, y), captured_at=1)


def predicted(image_id, road_type=RoadType.ROADWAY):
    return Prediction(
        image_id=image_id,
        road_type=road_type,
        road_type_conf=0.9,
        surface_type=SurfaceType.ASPHALT,
        surface_type_conf=0.9,
        quality=2.0,
    )


def assign(network, images, radius=10.0):
    index = build_index(
        [(s.segment_id, s.geometry) for s in network.segments],
        cell_size=2 * radius,
        radius=radius,
        frame=network.frame,
    )
    return assign_images(images, network, index, radius)


class TestAssignmentRules:
    def test_lone_segment_single_candidate(self):
        net = build_network(feat(1, "residential", [(0, 0), (100, 0)]))
        images = [(image_at("a", 50, 4), predicted("a"))]
        placements, report = assign(net, images)
        assert len(placements) == 1
        p = placements[0]
        assert p.segment_id == "1"
        assert p.disambiguation == Disambiguation.SINGLE_CANDIDATE
        assert p.distance_m == pytest.approx(4.0, abs=1e-6)
        assert p.chainage_m == pytest.approx(50.0, abs=1e-6)
        assert len(report) == 0

    def test_road_type_beats_distance(self):
        # roadway 6 m away, cycleway 3 m away; prediction says roadway
        net = build_network(
            feat(1, "residential", [(0, 6), (100, 6)]),
            feat(2, "cycleway", [(0, -3), (100, -3)]),
        )
        images = [(image_at("a", 50, 0), predicted("a", RoadType.ROADWAY))]
        placements, _ = assign(net, images)
        p = placements[0]
        assert p.segment_id == "1"
        assert p.disambiguation == Disambiguation.ROAD_TYPE_MATCH
        assert p.distance_m == pytest.approx(6.0, abs=1e-6)

    def test_no_focus_discarded(self):
        net = build_network(
            feat(1, "residential", [(0, 6), (100, 6)]),
            feat(2, "cycleway", [(0, -3), (100, -3)]),
        )
        images = [(image_at("a", 50, 0), predicted("a", RoadType.NO_FOCUS))]
        placements, report = assign(net, images)
        assert placements == []
        assert report.reasons == {"a": DiscardReason.NO_FOCUS}

    def test_out_of_range_discarded(self):
        net = build_network(feat(1, "residential", [(0, 0), (100, 0)]))
        images = [(image_at("a", 50, 30), predicted("a"))]
        placements, report = assign(net, images)
        assert placements == []
        assert report.reasons == {"a": DiscardReason.OUT_OF_RANGE}

    def test_nearest_fallback_when_no_type_matches(self):
        # image predicted sidewalk, but only roadway and cycleway nearby
        net = build_network(
            feat(1, "residential", [(0, 6), (100, 6)]),
            feat(2, "cycleway", [(0, -3), (100, -3)]),
        )
        images = [(image_at("a", 50, 0), predicted("a", RoadType.SIDEWALK))]
        placements, _ = assign(net, images)
        p = placements[0]
        assert p.segment_id == "2"  # plain nearest
        assert p.disambiguation == Disambiguation.NEAREST_FALLBACK

    def test_bike_lane_matches_roadway_with_cycleway_lane_tag(self):
        net = build_network(
            feat(1, "residential", [(0, 6), (100, 6)], cycleway="lane"),
            feat(2, "cycleway", [(0, -3), (100, -3)]),
        )
        images = [(image_at("a", 50, 0), predicted("a", RoadType.BIKE_LANE))]
        placements, _ = assign(net, images)
        p = placements[0]
        assert p.segment_id == "1"
        assert p.disambiguation == Disambiguation.ROAD_TYPE_MATCH

    def test_bike_lane_without_lane_tag_falls_back(self):
        net = build_network(
            feat(1, "residential", [(0, 6), (100, 6)]),
            feat(2, "cycleway", [(0, -3), (100, -3)]),
        )
        images = [(image_at("a", 50, 0), predicted("a", RoadType.BIKE_LANE))]
        placements, _ = assign(net, images)
        assert placements[0].segment_id == "2"
        assert placements[0].disambiguation == Disambiguation.NEAREST_FALLBACK

    def test_unmapped_highway_only_reachable_as_fallback(self):
        net = build_network(
            feat(1, "proposed", [(0, 2), (100, 2)]),
            feat(2, "residential", [(0, -8), (100, -8)]),
        )
        # prediction sidewalk: neither matches; nearest is the unmapped one
        images = [(image_at("a", 50, 0), predicted("a", RoadType.SIDEWALK))]
        placements, _ = assign(net, images)
        assert placements[0].segment_id == "1"
        assert placements[0].disambiguation == Disambiguation.NEAREST_FALLBACK

    def test_distance_tie_broken_by_smaller_segment_id(self):
        net = build_network(
            feat(9, "residential", [(0, 5), (100, 5)]),
            feat(10, "residential", [(0, -5), (100, -5)]),
        )
        images = [(image_at("a", 50, 0), predicted("a", RoadType.ROADWAY))]
        placements, _ = assign(net, images)
        # lexicographic: "10" < "9"
        assert placements[0].segment_id == "10"


class TestAssignmentProperties:
    def scenario_images(self, scenario):
        return [
            (record, scenario.predictions[record.image_id]) for record in scenario.images
        ]

    def test_every_image_accounted_exactly_once(self):
        scenario = generate_scenario(
            ScenarioSpec(seed=3, n_segments=20, geotag_noise_sd_m=6.0, parallel_roads=True)
        )
        images = self.scenario_images(scenario)
        placements, report = assign(scenario.network, images)
        placed_ids = {p.image_id for p in placements}
        discarded_ids = set(report.reasons)
        assert placed_ids.isdisjoint(discarded_ids)
        assert placed_ids | discarded_ids == {r.image_id for r, _ in images}

    def test_radius_bound_never_violated(self):
        scenario = generate_scenario(
            ScenarioSpec(seed=4, n_segments=15, geotag_noise_sd_m=8.0)
        )
        placements, _ = assign(scenario.network, self.scenario_images(scenario), radius=10.0)
        assert all(p.distance_m <= 10.0 for p in placements)

    def test_permutation_invariance(self):
        scenario = generate_scenario(
            ScenarioSpec(seed=5, n_segments=12, geotag_noise_sd_m=4.0, parallel_roads=True)
        )
        images = self.scenario_images(scenario)
        shuffled = images[:]
        random.Random(99).shuffle(shuffled)
        a, _ = assign(scenario.network, images)
        b, _ = assign(scenario.network, shuffled)
        assert a == b

    def test_matches_bruteforce_with_disambiguation(self):
        scenario = generate_scenario(
            ScenarioSpec(
                seed=6,
                n_segments=20,
                geotag_noise_sd_m=3.0,
                parallel_roads=True,
                images_per_subsegment_range=(2, 4),
            )
        )
        images = self.scenario_images(scenario)
        assert len(images) >= 500
        placements, report = assign(scenario.network, images)
        expected, expected_discards = oracles.brute_assign(images, scenario.network, 10.0)
        got = [
            (p.image_id, p.segment_id, p.chainage_m, p.distance_m, p.disambiguation)
            for p in placements
        ]
        assert len(got) == len(expected)
        for mine, ref in zip(got, expected):
            assert mine[0] == ref[0]
            assert mine[1] == ref[1]
            assert mine[2] == pytest.approx(ref[2], abs=1e-6)
            assert mine[3] == pytest.approx(ref[3], abs=1e-6)
            assert mine[4] == ref[4]
        assert {k: v.value for k, v in report.reasons.items()} == expected_discards

    def test_disambiguation_modes_all_exercised(self):
        scenario = generate_scenario(
            ScenarioSpec(seed=7, n_segments=10, geotag_noise_sd_m=3.0, parallel_roads=True)
        )
        placements, _ = assign(scenario.network, self.scenario_images(scenario))
        modes = {p.disambiguation for p in placements}
        assert Disambiguation.ROAD_TYPE_MATCH in modes
        assert Disambiguation.SINGLE_CANDIDATE in modes


class TestPlacementsCsv:
    def test_audit_dump(self, tmp_path):
        net = build_network(feat(1, "residential", [(0, 0), (100, 0)]))
        images = [(image_at("a", 50, 4), predicted("a"))]
        placements, _ = assign(net, images)
        path = tmp_path / "placements.csv"
        write_placements_csv(path, placements)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "image_id,segment_id,chainage_m,distance_m,disambiguation"
        assert lines[1] == "a,1,50.000,4.000,single_candidate"
