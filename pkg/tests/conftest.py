from __future__ import annotations

import json
import math
import random
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from roadsurface.geo import GeoPoint, LocalFrame, Polyline

FIXTURES = Path(__file__).parent / "fixtures"


class StubPredictionServer:
    """Minimal in-test HTTP service speaking the prediction wire protocol."""

    def __init__(self, predictions: dict) -> None:
        self.predictions = predictions
        self.calls = 0
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:
                if self.path != "/predict":
                    self.send_error(404)
                    return
                outer.calls += 1
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                rows = []
                for image_id in body["image_ids"]:
                    pred = outer.predictions.get(image_id)
                    if pred is None:
                        continue
                    rows.append(
                        {
                            "image_id": pred.image_id,
                            "road_type": pred.road_type.value,
                            "road_type_conf": pred.road_type_conf,
                            "surface_type": pred.surface_type.value,
                            "surface_type_conf": pred.surface_type_conf,
                            "quality": pred.quality,
                        }
                    )
                payload = json.dumps({"predictions": rows}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args) -> None:
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    def __enter__(self) -> "StubPredictionServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._server.shutdown()
        self._server.server_close()

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def frame() -> LocalFrame:
    return LocalFrame.at(GeoPoint(13.40, 52.52))


def random_polyline(rng: random.Random, frame: LocalFrame, n_vertices: int) -> Polyline:
    """Meandering walk with 5-50 m edges, good enough for geometric tests."""
    x, y = rng.uniform(-500, 500), rng.uniform(-500, 500)
    heading = rng.uniform(0, 2 * math.pi)
    points = [frame.to_point(x, y)]
    for _ in range(n_vertices - 1):
        heading += rng.uniform(-0.8, 0.8)
        step = rng.uniform(5, 50)
        x += step * math.cos(heading)
        y += step * math.sin(heading)
        points.append(frame.to_point(x, y))
    return Polyline(points)
