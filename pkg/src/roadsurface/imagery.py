"""Street-level image metadata ingestion.

Talks to the Mapillary Graph API in live mode, with cursor pagination,
a sliding-window rate limit and bounded retries; or replays recorded
response documents from a fixture directory, which is what every test
uses. Both providers expose the same `fetch_images` contract.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

import requests

from .geo import GeoPoint

GRAPH_API_URL = "https://graph.mapillary.com/images"
API_FIELDS = "id,computed_geometry,geometry,captured_at,creator,sequence,compass_angle"
TOKEN_ENV_VAR = "MAPILLARY_ACCESS_TOKEN"

Bbox = tuple[float, float, float, float]  # min_lon, min_lat, max_lon, max_lat


@dataclass(frozen=True)
class ImageRecord:
    """Georeferenced image metadata; never the pixels."""

    image_id: str
    position: GeoPoint
    captured_at: int  # ms since epoch
    creator: str = ""
    sequence_id: str | None = None
    camera_heading: float | None = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.camera_heading is not None and not (
            math.isfinite(self.camera_heading) and 0.0 <= self.camera_heading < 360.0
        ):
            raise ValueError(f"camera_heading out of [0,360): {self.camera_heading}")


@dataclass
class FetchManifest:
    bbox: Bbox
    fetched_count: int
    pages: int
    min_captured_at: int | None
    max_captured_at: int | None
    source: str  # "live_api" | "fixture"
    skipped_malformed: int = 0
    duplicates: int = 0
    filtered_out: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "bbox": list(self.bbox),
            "fetched_count": self.fetched_count,
            "pages": self.pages,
            "min_captured_at": self.min_captured_at,
            "max_captured_at": self.max_captured_at,
            "source": self.source,
            "skipped_malformed": self.skipped_malformed,
            "duplicates": self.duplicates,
            "filtered_out": self.filtered_out,
        }


class CredentialError(RuntimeError):
    """Authentication rejected; retrying is pointless."""


class FetchError(RuntimeError):
    """Transport kept failing. Carries whatever was fetched so far."""

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.records: list[ImageRecord] = []
        self.manifest: FetchManifest | None = None


class FixtureError(RuntimeError):
    """Fixture directory is missing a requested page."""


class RateLimiter:
    """Sliding 60 s window request budget. Clock and sleep are injectable
    so the bound is testable without waiting."""

    def __init__(
        self,
        per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if per_minute < 1:
            raise ValueError("per_minute must be >= 1")
        self.per_minute = per_minute
        self._clock = clock
        self._sleep = sleep
        self._sent: deque[float] = deque()

    def acquire(self) -> None:
        while True:
            now = self._clock()
            while self._sent and self._sent[0] <= now - 60.0:
                self._sent.popleft()
            if len(self._sent) < self.per_minute:
                self._sent.append(now)
                return
            self._sleep(self._sent[0] + 60.0 - now)


def _parse_image_item(item: Any) -> ImageRecord | None:
    """Turn one API record into an ImageRecord, None when malformed.

    Prefers the SfM-corrected `computed_geometry` over the raw geotag.
    """
    if not isinstance(item, dict):
        return None
    image_id = item.get("id")
    geometry = item.get("computed_geometry") or item.get("geometry")
    try:
        lon, lat = geometry["coordinates"][0], geometry["coordinates"][1]
        position = GeoPoint(float(lon), float(lat))
        captured_at = int(item["captured_at"])
    except (KeyError, IndexError, TypeError, ValueError):
        return None
    if not image_id:
        return None
    creator = item.get("creator", "")
    if isinstance(creator, dict):
        creator = creator.get("username", "")
    sequence = item.get("sequence")
    if isinstance(sequence, dict):
        sequence = sequence.get("id")
    heading = item.get("compass_angle")
    try:
        heading = float(heading) % 360.0 if heading is not None else None
    except (TypeError, ValueError):
        heading = None
    try:
        return ImageRecord(
            image_id=str(image_id),
            position=position,
            captured_at=captured_at,
            creator=str(creator or ""),
            sequence_id=str(sequence) if sequence else None,
            camera_heading=heading,
        )
    except ValueError:
        return None


class _RecordCollector:
    """Accumulates pages; dedup, bbox/date post-filter and manifest."""

    def __init__(self, bbox: Bbox, date_min: int | None, source: str) -> None:
        self.bbox = bbox
        self.date_min = date_min
        self.source = source
        self.pages = 0
        self.skipped = 0
        self.duplicates = 0
        self.filtered = 0
        self._records: dict[str, ImageRecord] = {}

    def add_page(self, doc: Any) -> None:
        self.pages += 1
        data = doc.get("data", []) if isinstance(doc, dict) else []
        for item in data:
            record = _parse_image_item(item)
            if record is None:
                self.skipped += 1
                continue
            if record.image_id in self._records:
                self.duplicates += 1
                continue
            self._records[record.image_id] = record

    def finish(self) -> tuple[list[ImageRecord], FetchManifest]:
        min_lon, min_lat, max_lon, max_lat = self.bbox
        kept = []
        for record in self._records.values():
            p = record.position
            in_bbox = min_lon <= p.lon <= max_lon and min_lat <= p.lat <= max_lat
            recent = self.date_min is None or record.captured_at >= self.date_min
            if in_bbox and recent:
                kept.append(record)
            else:
                self.filtered += 1
        kept.sort(key=lambda r: r.image_id)
        times = [r.captured_at for r in kept]
        manifest = FetchManifest(
            bbox=self.bbox,
            fetched_count=len(kept),
            pages=self.pages,
            min_captured_at=min(times) if times else None,
            max_captured_at=max(times) if times else None,
            source=self.source,
            skipped_malformed=self.skipped,
            duplicates=self.duplicates,
            filtered_out=self.filtered,
        )
        return kept, manifest


class MapillaryClient:
    """Live Graph API client: bearer-token auth, cursor pagination,
    capped exponential backoff on 429/5xx."""

    def __init__(
        self,
        token: str,
        page_size: int = 1000,
        per_minute: int = 50,
        max_retries: int = 4,
        backoff_base_s: float = 1.0,
        backoff_cap_s: float = 30.0,
        transport: Callable[[str], tuple[int, Any]] | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not token:
            raise CredentialError("access token must be non-empty in live mode")
        self._token = token
        self.page_size = page_size
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self._transport = transport or self._http_get
        self._sleep = sleep
        self._limiter = RateLimiter(per_minute, clock=clock, sleep=sleep)

    def _http_get(self, url: str) -> tuple[int, Any]:
        resp = requests.get(
            url, headers={"Authorization": f"Bearer {self._token}"}, timeout=30
        )
        try:
            body = resp.json()
        except ValueError:
            body = None
        return resp.status_code, body

    def _get_with_retry(self, url: str) -> Any:
        last_status = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(min(self.backoff_cap_s, self.backoff_base_s * 2 ** (attempt - 1)))
            self._limiter.acquire()
            try:
                status, body = self._transport(url)
            except requests.RequestException as exc:
                last_status = f"transport error: {exc}"
                continue
            if status == 200 and isinstance(body, dict):
                return body
            if status in (401, 403):
                raise CredentialError(f"API rejected credentials (HTTP {status})")
            last_status = f"HTTP {status}"
            if not (status == 429 or status >= 500):
                break
        raise FetchError(f"GET {url} failed after {self.max_retries + 1} attempts ({last_status})")

    def fetch_images(
        self,
        bbox: Bbox,
        date_min: int | None = None,
        page_limit: int | None = None,
    ) -> tuple[list[ImageRecord], FetchManifest]:
        """All images in bbox, deduplicated and sorted by image_id."""
        min_lon, min_lat, max_lon, max_lat = bbox
        url: str | None = (
            f"{GRAPH_API_URL}?bbox={min_lon},{min_lat},{max_lon},{max_lat}"
            f"&fields={API_FIELDS}&limit={self.page_size}"
        )
        collector = _RecordCollector(bbox, date_min, source="live_api")
        try:
            while url and (page_limit is None or collector.pages < page_limit):
                doc = self._get_with_retry(url)
                collector.add_page(doc)
                url = (doc.get("paging") or {}).get("next")
        except FetchError as exc:
            exc.records, exc.manifest = collector.finish()
            raise
        return collector.finish()


class FixtureStore:
    """Replays recorded API responses; never touches the network.

    Layout: an `index.json` with `{"start": <cursor>, "pages": {<cursor>:
    <filename>}}` next to one response document per page. Page chaining
    follows each document's `paging.cursors.after` while `paging.next`
    is present, mirroring the live wire format.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        index_path = self.path / "index.json"
        if not index_path.exists():
            raise FixtureError(f"no index.json in fixture directory {self.path}")
        try:
            index = json.loads(index_path.read_text(encoding="utf-8"))
            self.start: str = index["start"]
            self.pages: dict[str, str] = dict(index["pages"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise FixtureError(f"malformed fixture index {index_path}: {exc}") from exc
        if not self.pages:
            raise FixtureError(f"fixture index {index_path} lists no pages")

    def _load_page(self, cursor: str) -> Any:
        filename = self.pages.get(cursor)
        if filename is None:
            raise FixtureError(f"no fixture page recorded for cursor {cursor!r}")
        page_path = self.path / filename
        if not page_path.exists():
            raise FixtureError(f"fixture page file missing: {page_path}")
        return json.loads(page_path.read_text(encoding="utf-8"))

    def fetch_images(
        self,
        bbox: Bbox,
        date_min: int | None = None,
        page_limit: int | None = None,
    ) -> tuple[list[ImageRecord], FetchManifest]:
        collector = _RecordCollector(bbox, date_min, source="fixture")
        cursor: str | None = self.start
        while cursor is not None and (page_limit is None or collector.pages < page_limit):
            doc = self._load_page(cursor)
            collector.add_page(doc)
            paging = doc.get("paging") or {}
            if paging.get("next"):
                cursor = (paging.get("cursors") or {}).get("after")
                if cursor is None:
                    raise FixtureError("page advertises next but carries no after cursor")
            else:
                cursor = None
        return collector.finish()


def load_fixture_store(path: str | Path) -> FixtureStore:
    """Open a recorded-response directory as a fetch provider."""
    return FixtureStore(path)


def write_image_records(path: str | Path, records: Iterable[ImageRecord]) -> None:
    """Persist records as JSON lines; this file is the hand-off to
    classifier backends."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "image_id": r.image_id,
                        "lon": r.position.lon,
                        "lat": r.position.lat,
                        "captured_at": r.captured_at,
                        "creator": r.creator,
                        "sequence_id": r.sequence_id,
                        "camera_heading": r.camera_heading,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def read_image_records(path: str | Path) -> list[ImageRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                records.append(
                    ImageRecord(
                        image_id=row["image_id"],
                        position=GeoPoint(row["lon"], row["lat"]),
                        captured_at=int(row["captured_at"]),
                        creator=row.get("creator", ""),
                        sequence_id=row.get("sequence_id"),
                        camera_heading=row.get("camera_heading"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad image record: {exc}") from exc
    return records


def download_images(
    records: Iterable[ImageRecord],
    dest: str | Path,
    fetch_bytes: Callable[[ImageRecord], bytes],
) -> dict[str, str]:
    """Optional image-byte download with content-addressed filenames.

    Returns image_id -> filename and writes the same mapping to
    `index.json` in `dest`. The pipeline itself never looks at pixels;
    this exists for external classifiers that do.
    """
    dest_path = Path(dest)
    dest_path.mkdir(parents=True, exist_ok=True)
    index: dict[str, str] = {}
    for record in records:
        blob = fetch_bytes(record)
        name = hashlib.sha256(blob).hexdigest() + ".jpg"
        (dest_path / name).write_bytes(blob)
        index[record.image_id] = name
    (dest_path / "index.json").write_text(
        json.dumps(index, sort_keys=True, indent=2), encoding="utf-8"
    )
    return index
