from __future__ import annotations

import json

import pytest

from roadsurface.cli import EXIT_OK, EXIT_STAGE, EXIT_USAGE, main
from roadsurface.imagery import read_image_records
from roadsurface.predictions import load_predictions_file

from conftest import StubPredictionServer


def run_synth(tmp_path, *extra):
    out = tmp_path / "scenario"
    code = main(
        ["synth", "--out", str(out), "--seed", "77", "--n-segments", "8",
         "--images-per-subsegment", "4", "6", *extra]
    )
    assert code == EXIT_OK
    return out


class TestExitCodes:
    def test_usage_error_is_one(self, capsys):
        with pytest.raises(SystemExit) as err:
            main(["aggregate", "--format", "xml"])
        assert err.value.code == EXIT_USAGE

    def test_missing_subcommand_is_one(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == EXIT_USAGE

    def test_stage_failure_is_two(self, tmp_path, capsys):
        scenario = run_synth(tmp_path)
        code = main(
            ["run",
             "--bbox", (scenario / "bbox.txt").read_text(),
             "--network", str(scenario / "network.geojson"),
             "--images", str(scenario / "images.jsonl"),
             "--backend", str(tmp_path / "missing.csv"),
             "--out", str(tmp_path / "out")]
        )
        assert code == EXIT_STAGE
        assert "backend" in capsys.readouterr().err


class TestSynthCommand:
    def test_writes_all_artifacts(self, tmp_path, capsys):
        out = run_synth(tmp_path)
        for name in ("network.geojson", "images.jsonl", "predictions.csv", "truth.csv", "bbox.txt"):
            assert (out / name).exists()
        assert "8 segments" in capsys.readouterr().out


class TestFetchCommand:
    def test_fixture_fetch_with_manifest(self, fixtures_dir, tmp_path, capsys):
        records_path = tmp_path / "records.jsonl"
        manifest_path = tmp_path / "manifest.json"
        code = main(
            ["fetch", "--bbox", "13.35,52.50,13.45,52.56",
             "--images", str(fixtures_dir / "mapillary_3page"),
             "--out", str(records_path), "--manifest", str(manifest_path)]
        )
        assert code == EXIT_OK
        assert len(read_image_records(records_path)) == 6
        manifest = json.loads(manifest_path.read_text())
        assert manifest["pages"] == 3
        assert manifest["source"] == "fixture"

    def test_live_without_token_fails(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("MAPILLARY_ACCESS_TOKEN", raising=False)
        code = main(
            ["fetch", "--bbox", "13.35,52.50,13.45,52.56", "--out", str(tmp_path / "r.jsonl")]
        )
        assert code == EXIT_STAGE
        assert "token" in capsys.readouterr().err


class TestClassifyCommand:
    def test_file_backend_filters_to_requested_ids(self, tmp_path, capsys):
        scenario = run_synth(tmp_path)
        out = tmp_path / "preds_out.csv"
        code = main(
            ["classify", "--images", str(scenario / "images.jsonl"),
             "--backend", str(scenario / "predictions.csv"), "--out", str(out)]
        )
        assert code == EXIT_OK
        original, _ = load_predictions_file(scenario / "predictions.csv")
        written, _ = load_predictions_file(out)
        assert written == original

    def test_http_backend(self, tmp_path):
        scenario = run_synth(tmp_path)
        preds, _ = load_predictions_file(scenario / "predictions.csv")
        out = tmp_path / "preds_http.csv"
        with StubPredictionServer(preds) as stub:
            code = main(
                ["classify", "--images", str(scenario / "images.jsonl"),
                 "--backend", stub.url, "--out", str(out), "--batch-size", "64"]
            )
        assert code == EXIT_OK
        written, _ = load_predictions_file(out)
        assert written == preds


class TestRunAndEvaluate:
    def test_full_flow_and_self_evaluation(self, tmp_path, capsys):
        scenario = run_synth(tmp_path)
        out = tmp_path / "out"
        code = main(
            ["run",
             "--bbox", (scenario / "bbox.txt").read_text(),
             "--network", str(scenario / "network.geojson"),
             "--images", str(scenario / "images.jsonl"),
             "--backend", str(scenario / "predictions.csv"),
             "--out", str(out), "--format", "both"]
        )
        assert code == EXIT_OK
        assert "coverage" in capsys.readouterr().out
        summary = json.loads((out / "summary.json").read_text())
        assert summary["coverage"] == 1.0

        report_path = tmp_path / "report.json"
        code = main(
            ["evaluate", "--aggregates", str(out / "classified_network.csv"),
             "--truth", str(scenario / "truth.csv"), "--out", str(report_path)]
        )
        assert code == EXIT_OK
        report = json.loads(report_path.read_text())
        # noise-free scenario must evaluate perfectly against its own truth
        assert report["type_accuracy"] == 1.0
        assert report["quality_accuracy"] == 1.0
        assert report["one_off_accuracy"] == 1.0
        assert report["coverage"] == 1.0
        text = capsys.readouterr().out
        assert "accuracy" in text

    def test_config_file_with_cli_override(self, tmp_path):
        scenario = run_synth(tmp_path)
        ini = tmp_path / "run.ini"
        ini.write_text(
            "[pipeline]\n"
            f"boundary = {(scenario / 'bbox.txt').read_text()}\n"
            f"network = {scenario / 'network.geojson'}\n"
            f"images = {scenario / 'images.jsonl'}\n"
            f"backend = {scenario / 'predictions.csv'}\n"
            f"out = {tmp_path / 'out_a'}\n"
            "min_agreeing = 99\n"
        )
        code = main(["run", "--config", str(ini), "--min-agreeing", "3"])
        assert code == EXIT_OK
        summary = json.loads((tmp_path / "out_a" / "summary.json").read_text())
        assert summary["coverage"] == 1.0  # the override took effect
