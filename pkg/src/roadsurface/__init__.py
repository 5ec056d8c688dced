"""roadsurface: cohesive road-surface datasets from street-level imagery
predictions and an OSM road network."""

from .aggregation import (
    SegmentAggregate,
    SegmentStatus,
    SubsegmentAggregate,
    aggregate_network,
    aggregate_segment,
    aggregate_subsegments,
)
from .assignment import Disambiguation, DiscardReason, ImagePlacement, assign_images
from .config import PipelineConfig
from .geo import (
    GeoPoint,
    GridIndex,
    LocalFrame,
    Polyline,
    build_index,
    haversine_m,
    project_point_to_polyline,
    query_index,
    split_polyline,
)
from .imagery import FetchManifest, ImageRecord, MapillaryClient, load_fixture_store
from .metrics import (
    EvalReport,
    classification_metrics,
    coverage,
    evaluate,
    one_off_accuracy,
    spearman_rho,
)
from .network import (
    Boundary,
    RoadNetwork,
    RoadSegment,
    map_highway_to_road_type,
    parse_network_geojson,
    parse_overpass_json,
)
from .pipeline import RunSummary, StageError, export_csv, export_geojson, run_pipeline
from .predictions import (
    Prediction,
    QualityClass,
    RoadType,
    SurfaceType,
    load_predictions_file,
    predict_via_http,
    quality_to_class,
)
from .synth import Scenario, ScenarioSpec, generate_scenario

__version__ = "0.1.0"
