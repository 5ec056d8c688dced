"""Command-line interface.

Subcommands map to pipeline stages so persisted intermediates can be
reused: `fetch` image metadata, `classify` against a backend, `aggregate`
existing intermediates, `run` the whole flow, `evaluate` against truth
labels, and `synth` to generate test scenarios.

Exit codes: 0 success, 1 usage error, 2 stage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from .config import ConfigError, PipelineConfig
from .imagery import (
    CredentialError,
    FetchError,
    FixtureError,
    MapillaryClient,
    TOKEN_ENV_VAR,
    load_fixture_store,
    read_image_records,
    write_image_records,
)
from .metrics import evaluate, format_report, load_truth_csv
from .network import Boundary, BoundaryError
from .pipeline import StageError, load_aggregates_csv, run_pipeline
from .predictions import (
    PredictionBackendError,
    PredictionFileError,
    load_predictions_file,
    predict_via_http,
    write_predictions_file,
)
from .synth import Scenario, ScenarioSpec, generate_scenario

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse default exits 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file with a [pipeline] section")
    p.add_argument("--bbox", dest="boundary", help="minLon,minLat,maxLon,maxLat or polygon GeoJSON path")
    p.add_argument("--network", help="road network file (GeoJSON or Overpass JSON)")
    p.add_argument("--images", help="'live', fixture directory, or records .jsonl")
    p.add_argument("--backend", help="prediction CSV path or http(s) endpoint")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("geojson", "csv", "both"), help="export format")
    p.add_argument("--radius-m", dest="radius_m", type=float, help="assignment radius in metres")
    p.add_argument("--subsegment-m", dest="subsegment_m", type=float, help="subsegment length in metres")
    p.add_argument("--min-agreeing", dest="min_agreeing", type=int, help="votes needed per subsegment")
    p.add_argument("--min-fraction", dest="min_fraction", type=float, help="classified subsegment fraction needed")
    p.add_argument("--min-confidence", dest="min_confidence", type=float, help="drop predictions below this confidence")
    p.add_argument("--date-min", dest="date_min", type=int, help="ignore images captured before this ms timestamp")
    p.add_argument("--page-limit", dest="page_limit", type=int, help="stop fetching after this many pages")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="ids per HTTP prediction request")
    p.add_argument("--lenient", action="store_const", const=True, help="skip bad prediction rows instead of failing")
    p.add_argument("--placements", dest="write_placements", action="store_const", const=True,
                   help="also write the image placement audit CSV")


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    keys = (
        "boundary", "network", "images", "backend", "out", "format",
        "radius_m", "subsegment_m", "min_agreeing", "min_fraction",
        "min_confidence", "date_min", "page_limit", "batch_size",
        "lenient", "write_placements",
    )
    overrides = {k: getattr(args, k, None) for k in keys}
    return PipelineConfig.load(config_file=getattr(args, "config", None), **overrides)


def build_parser() -> _Parser:
    parser = _Parser(prog="roadsurface", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fetch = sub.add_parser("fetch", help="fetch image metadata for a bbox")
    p_fetch.add_argument("--bbox", required=True, help="minLon,minLat,maxLon,maxLat")
    p_fetch.add_argument("--images", default="live", help="'live' or a fixture directory")
    p_fetch.add_argument("--out", required=True, help="output records .jsonl")
    p_fetch.add_argument("--manifest", help="also write the fetch manifest JSON here")
    p_fetch.add_argument("--date-min", dest="date_min", type=int)
    p_fetch.add_argument("--page-limit", dest="page_limit", type=int)
    p_fetch.add_argument("--per-minute", dest="per_minute", type=int, default=50)

    p_classify = sub.add_parser("classify", help="obtain predictions for fetched images")
    p_classify.add_argument("--images", required=True, help="records .jsonl")
    p_classify.add_argument("--backend", required=True, help="prediction CSV or http(s) endpoint")
    p_classify.add_argument("--out", required=True, help="output prediction CSV")
    p_classify.add_argument("--batch-size", dest="batch_size", type=int, default=100)

    p_aggregate = sub.add_parser("aggregate", help="assign, aggregate and export")
    _add_common_pipeline_flags(p_aggregate)

    p_run = sub.add_parser("run", help="full pipeline: ingest, predict, aggregate, export")
    _add_common_pipeline_flags(p_run)

    p_eval = sub.add_parser("evaluate", help="score an exported network against truth labels")
    p_eval.add_argument("--aggregates", required=True, help="exported classified_network.csv")
    p_eval.add_argument("--truth", required=True, help="truth CSV")
    p_eval.add_argument("--out", help="write the JSON report here")

    p_synth = sub.add_parser("synth", help="generate a synthetic scenario")
    p_synth.add_argument("--out", required=True, help="scenario directory")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--n-segments", dest="n_segments", type=int, default=50)
    p_synth.add_argument("--images-per-subsegment", dest="images_per_subsegment", type=int,
                         nargs=2, default=(3, 6), metavar=("MIN", "MAX"))
    p_synth.add_argument("--type-noise", dest="type_noise", type=float, default=0.0)
    p_synth.add_argument("--quality-noise", dest="quality_noise", type=float, default=0.0)
    p_synth.add_argument("--geotag-noise", dest="geotag_noise", type=float, default=0.0)
    p_synth.add_argument("--drop-rate", dest="drop_rate", type=float, default=0.0)
    p_synth.add_argument("--parallel-roads", dest="parallel_roads", action="store_true")

    return parser


def _cmd_fetch(args: argparse.Namespace) -> int:
    if args.images == "live":
        token = os.environ.get(TOKEN_ENV_VAR, "")
        provider = MapillaryClient(token, per_minute=args.per_minute)
    else:
        provider = load_fixture_store(args.images)
    bbox = Boundary.from_bbox_string(args.bbox).bbox
    records, manifest = provider.fetch_images(
        bbox, date_min=args.date_min, page_limit=args.page_limit
    )
    write_image_records(args.out, records)
    if args.manifest:
        Path(args.manifest).write_text(
            json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    print(f"fetched {manifest.fetched_count} records over {manifest.pages} pages -> {args.out}")
    return EXIT_OK


def _cmd_classify(args: argparse.Namespace) -> int:
    records = read_image_records(args.images)
    ids = [r.image_id for r in records]
    if args.backend.startswith(("http://", "https://")):
        preds, report = predict_via_http(args.backend, ids, batch_size=args.batch_size)
        if report.missing_ids:
            print(f"warning: no prediction for {len(report.missing_ids)} ids", file=sys.stderr)
    else:
        preds, _ = load_predictions_file(args.backend)
        missing = sum(1 for i in ids if i not in preds)
        if missing:
            print(f"warning: no prediction for {missing} ids", file=sys.stderr)
    rows = [preds[i] for i in ids if i in preds]
    write_predictions_file(args.out, rows)
    print(f"wrote {len(rows)} predictions -> {args.out}")
    return EXIT_OK


def _cmd_pipeline(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    aggregates, summary = run_pipeline(config)
    print(json.dumps(summary.to_dict(), sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    aggregates = load_aggregates_csv(args.aggregates)
    truth = load_truth_csv(args.truth)
    report = evaluate(aggregates, truth)
    print(format_report(report))
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = ScenarioSpec(
        seed=args.seed,
        n_segments=args.n_segments,
        images_per_subsegment_range=tuple(args.images_per_subsegment),
        type_noise_rate=args.type_noise,
        quality_noise_sd=args.quality_noise,
        geotag_noise_sd_m=args.geotag_noise,
        drop_rate=args.drop_rate,
        parallel_roads=args.parallel_roads,
    )
    scenario: Scenario = generate_scenario(spec)
    paths = scenario.write(args.out)
    print(
        f"scenario seed={spec.seed}: {len(scenario.network.segments)} segments, "
        f"{len(scenario.images)} images -> {args.out}"
    )
    for kind in sorted(paths):
        print(f"  {kind}: {paths[kind]}")
    return EXIT_OK


_COMMANDS = {
    "fetch": _cmd_fetch,
    "classify": _cmd_classify,
    "aggregate": _cmd_pipeline,
    "run": _cmd_pipeline,
    "evaluate": _cmd_evaluate,
    "synth": _cmd_synth,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, BoundaryError) as exc:
        print(f"roadsurface: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"roadsurface: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (
        CredentialError,
        FetchError,
        FixtureError,
        PredictionFileError,
        PredictionBackendError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"roadsurface: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
