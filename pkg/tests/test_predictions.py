from __future__ import annotations

import random

import pytest

from roadsurface.predictions import (
    PartialFailureReport,
    Prediction,
    PredictionBackendError,
    PredictionFileError,
    QualityClass,
    RoadType,
    SurfaceType,
    load_predictions_file,
    passes_confidence,
    predict_via_http,
    quality_to_class,
    write_predictions_file,
)

from conftest import StubPredictionServer


def make_prediction(image_id="42", **kw):
    defaults = dict(
        road_type=RoadType.ROADWAY,
        road_type_conf=0.98,
        surface_type=SurfaceType.ASPHALT,
        surface_type_conf=0.95,
        quality=1.7,
    )
    defaults.update(kw)
    return Prediction(image_id=image_id, **defaults)


def random_prediction(rng: random.Random, image_id: str) -> Prediction:
    return Prediction(
        image_id=image_id,
        road_type=rng.choice(list(RoadType)),
        road_type_conf=round(rng.random(), 6),
        surface_type=rng.choice(list(SurfaceType)),
        surface_type_conf=round(rng.random(), 6),
        quality=rng.uniform(1, 5),
    )


class TestPredictionType:
    def test_validation(self):
        with pytest.raises(ValueError):
            make_prediction(quality=5.3)
        with pytest.raises(ValueError):
            make_prediction(road_type_conf=1.2)
        with pytest.raises(ValueError):
            make_prediction(image_id="")

    def test_enum_values_are_snake_case(self):
        assert SurfaceType.PAVING_STONES.value == "paving_stones"
        assert RoadType.NO_FOCUS.value == "no_focus"
        assert [c.value for c in QualityClass] == [
            "excellent", "good", "intermediate", "bad", "very_bad",
        ]


class TestQualityToClass:
    @pytest.mark.parametrize(
        "q,expected",
        [
            (1.0, QualityClass.EXCELLENT),
            (1.49, QualityClass.EXCELLENT),
            (1.5, QualityClass.GOOD),  # half rounds away from zero
            (2.5, QualityClass.INTERMEDIATE),
            (4.49, QualityClass.BAD),
            (4.5, QualityClass.VERY_BAD),
            (5.0, QualityClass.VERY_BAD),
        ],
    )
    def test_fixed_points(self, q, expected):
        assert quality_to_class(q) == expected

    def test_monotone_and_surjective(self):
        classes = [quality_to_class(1.0 + 4.0 * i / 2000) for i in range(2001)]
        ranks = [list(QualityClass).index(c) for c in classes]
        assert ranks == sorted(ranks)
        assert set(classes) == set(QualityClass)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            quality_to_class(0.99)


class TestPredictionsFile:
    def test_simple_row(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text(
            "image_id,road_type,road_type_conf,surface_type,surface_type_conf,quality\n"
            "42,roadway,0.98,asphalt,0.95,1.7\n"
        )
        loaded, report = load_predictions_file(path)
        assert loaded == {"42": make_prediction()}
        assert report.rows == 1

    def test_unknown_surface_token_names_row(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text(
            "image_id,road_type,road_type_conf,surface_type,surface_type_conf,quality\n"
            "42,roadway,0.98,cobblestone,0.95,1.7\n"
        )
        with pytest.raises(PredictionFileError) as err:
            load_predictions_file(path)
        assert "row 2" in str(err.value)
        assert "cobblestone" in str(err.value)

    def test_lenient_skips_and_counts(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text(
            "image_id,road_type,road_type_conf,surface_type,surface_type_conf,quality\n"
            "1,roadway,0.9,asphalt,0.9,2.0\n"
            "2,roadway,0.9,cobblestone,0.9,2.0\n"
            "3,roadway,0.9,sett,0.9,9.0\n"
        )
        loaded, report = load_predictions_file(path, lenient=True)
        assert set(loaded) == {"1"}
        assert report.skipped == 2

    def test_quality_out_of_range_fail_fast(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text(
            "image_id,road_type,road_type_conf,surface_type,surface_type_conf,quality\n"
            "1,roadway,0.9,asphalt,0.9,0.2\n"
        )
        with pytest.raises(PredictionFileError):
            load_predictions_file(path)

    def test_duplicate_last_wins_with_count(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text(
            "image_id,road_type,road_type_conf,surface_type,surface_type_conf,quality\n"
            "1,roadway,0.9,asphalt,0.9,2.0\n"
            "1,roadway,0.9,sett,0.9,3.0\n"
        )
        loaded, report = load_predictions_file(path)
        assert loaded["1"].surface_type == SurfaceType.SETT
        assert report.duplicates == 1

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(PredictionFileError):
            load_predictions_file(path)

    def test_thousand_row_roundtrip_exact(self, tmp_path):
        rng = random.Random(42)
        original = {f"id{i:05d}": random_prediction(rng, f"id{i:05d}") for i in range(1000)}
        path = tmp_path / "big.csv"
        write_predictions_file(path, original.values())
        loaded, report = load_predictions_file(path)
        assert loaded == original
        assert report.rows == 1000
        assert report.duplicates == 0


class TestHttpBackend:
    def test_three_known_ids(self):
        preds = {str(i): make_prediction(str(i)) for i in (1, 2, 3)}
        with StubPredictionServer(preds) as stub:
            got, report = predict_via_http(stub.url, ["1", "2", "3"])
        assert got == preds
        assert report.missing_ids == []

    def test_batching_arithmetic(self):
        ids = [f"b{i:03d}" for i in range(250)]
        preds = {i: make_prediction(i) for i in ids}
        with StubPredictionServer(preds) as stub:
            got, _ = predict_via_http(stub.url, ids, batch_size=100)
            assert stub.calls == 3
        assert len(got) == 250

    def test_partial_failure_reported(self):
        preds = {"1": make_prediction("1"), "2": make_prediction("2")}
        with StubPredictionServer(preds) as stub:
            got, report = predict_via_http(stub.url, ["1", "2", "ghost"])
        assert set(got) == {"1", "2"}
        assert report.missing_ids == ["ghost"]

    def test_unreachable_endpoint(self):
        with pytest.raises(PredictionBackendError):
            predict_via_http("http://127.0.0.1:9/", ["1"], timeout=0.2)

    def test_file_and_http_providers_agree(self, tmp_path):
        rng = random.Random(5)
        ids = [f"x{i:04d}" for i in range(40)]
        preds = {i: random_prediction(rng, i) for i in ids}
        path = tmp_path / "p.csv"
        write_predictions_file(path, [preds[i] for i in ids])
        from_file, _ = load_predictions_file(path)
        with StubPredictionServer(preds) as stub:
            from_http, _ = predict_via_http(stub.url, ids, batch_size=7)
        assert from_file == from_http


class TestConfidenceFilter:
    def test_min_of_both_confidences(self):
        p = make_prediction(road_type_conf=0.4, surface_type_conf=0.9)
        assert passes_confidence(p, 0.0)
        assert passes_confidence(p, 0.4)
        assert not passes_confidence(p, 0.5)
