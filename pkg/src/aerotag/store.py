"""Telemetry ingestion and the queryable record store.

parse_message enforces a closed schema on the published JSON bytes; the
store deduplicates on (tag_id, seq, type), optionally appending each new
record to a JSON Lines file as it arrives. One writer, many readers:
queries copy a consistent snapshot under the same lock the writer takes.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import InvariantViolation, SchemaError, StorageFull
from .pipeline import MESSAGE_FIELDS, PublishedMessage, RunMetrics

_REQUIRED_FIELDS = {
    "ts_ms": int,
    "gateway_id": str,
    "bridge_id": str,
    "tag_id": int,
    "type": str,
    "seq": int,
}


@dataclass(frozen=True)
class TelemetryRecord:
    ts_ms: int
    tag_id: int
    type: str
    seq: int
    temp_c: float | None
    gateway_id: str
    bridge_id: str

    def __post_init__(self):
        if (self.temp_c is not None) != (self.type == "temperature"):
            raise InvariantViolation("temp_c present iff type is temperature")

    @property
    def key(self) -> tuple[int, int, str]:
        return (self.tag_id, self.seq, self.type)


@dataclass(frozen=True)
class QueryFilter:
    tag_id: int | None = None
    type: str | None = None
    t0_ms: int | None = None
    t1_ms: int | None = None

    def __post_init__(self):
        if self.t0_ms is not None and self.t1_ms is not None and self.t0_ms > self.t1_ms:
            raise InvariantViolation("time range start after end")

    def matches(self, rec: TelemetryRecord) -> bool:
        if self.tag_id is not None and rec.tag_id != self.tag_id:
            return False
        if self.type is not None and rec.type != self.type:
            return False
        if self.t0_ms is not None and rec.ts_ms < self.t0_ms:
            return False
        if self.t1_ms is not None and rec.ts_ms > self.t1_ms:
            return False
        return True


def record_from_message(m: PublishedMessage) -> TelemetryRecord:
    return TelemetryRecord(ts_ms=m.ts_ms, tag_id=m.tag_id, type=m.type, seq=m.seq,
                           temp_c=m.temp_c, gateway_id=m.gateway_id, bridge_id=m.bridge_id)


def parse_message(data: bytes) -> TelemetryRecord:
    """Decode published bytes under the closed schema; unknown keys are errors."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise SchemaError("message must be a JSON object")

    for key in obj:
        if key not in MESSAGE_FIELDS:
            raise SchemaError(f"unknown key '{key}'")
    for key, kind in _REQUIRED_FIELDS.items():
        if key not in obj:
            raise SchemaError(f"missing key '{key}'")
        if not isinstance(obj[key], kind) or isinstance(obj[key], bool):
            raise SchemaError(f"key '{key}' must be {kind.__name__}")

    msg_type = obj["type"]
    if msg_type not in ("activity", "temperature"):
        raise SchemaError(f"key 'type' has unknown value {msg_type!r}")
    temp_c = obj.get("temp_c")
    if msg_type == "temperature":
        if not isinstance(temp_c, (int, float)) or isinstance(temp_c, bool):
            raise SchemaError("temperature message requires numeric 'temp_c'")
        temp_c = float(temp_c)
    elif "temp_c" in obj:
        raise SchemaError("activity message must not carry 'temp_c'")

    return TelemetryRecord(ts_ms=obj["ts_ms"], tag_id=obj["tag_id"], type=msg_type,
                           seq=obj["seq"], temp_c=temp_c,
                           gateway_id=obj["gateway_id"], bridge_id=obj["bridge_id"])


def record_line(rec: TelemetryRecord) -> str:
    """JSONL persistence form: same key order as the published message."""
    obj = {
        "ts_ms": rec.ts_ms,
        "gateway_id": rec.gateway_id,
        "bridge_id": rec.bridge_id,
        "tag_id": rec.tag_id,
        "type": rec.type,
        "seq": rec.seq,
    }
    if rec.temp_c is not None:
        obj["temp_c"] = rec.temp_c
    return json.dumps(obj, separators=(",", ":"))


class TelemetryStore:
    """In-memory index of telemetry records with optional JSONL persistence."""

    def __init__(self, path: str | Path | None = None, max_records: int | None = None):
        self._records: list[TelemetryRecord] = []
        self._keys: set[tuple[int, int, str]] = set()
        self._lock = threading.Lock()
        self._max = max_records
        self._fh = open(path, "w", encoding="utf-8") if path is not None else None

    def append(self, rec: TelemetryRecord) -> bool:
        """Insert iff the (tag_id, seq, type) key is unseen; False on duplicate."""
        with self._lock:
            if rec.key in self._keys:
                return False
            if self._max is not None and len(self._records) >= self._max:
                raise StorageFull(f"record cap {self._max} reached")
            self._keys.add(rec.key)
            self._records.append(rec)
            if self._fh is not None:
                self._fh.write(record_line(rec) + "\n")
                self._fh.flush()
        return True

    def query(self, f: QueryFilter = QueryFilter()) -> list[TelemetryRecord]:
        """Matching records ordered by ts_ms, ties broken by (tag_id, seq)."""
        with self._lock:
            snapshot = list(self._records)
        hits = [r for r in snapshot if f.matches(r)]
        hits.sort(key=lambda r: (r.ts_ms, r.tag_id, r.seq))
        return hits

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def temp_counts(self) -> dict[int, int]:
        """Stored temperature packets per tag; feeds the linger decision."""
        counts: dict[int, int] = {}
        with self._lock:
            for r in self._records:
                if r.type == "temperature":
                    counts[r.tag_id] = counts.get(r.tag_id, 0) + 1
        return counts

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


@dataclass(frozen=True)
class TagSummary:
    tag_id: int
    activity_count: int
    temperature_count: int
    first_seen_ms: int
    last_seen_ms: int
    temp_min_c: float | None
    temp_mean_c: float | None
    temp_max_c: float | None


@dataclass(frozen=True)
class ReportSummary:
    per_tag: dict[int, TagSummary]
    published: int
    expired: int
    auth_failures: int
    dropped: int


def report(store: TelemetryStore, metrics: RunMetrics) -> ReportSummary:
    """Summarize the store; temperature stats cover TEMPERATURE records only."""
    per_tag: dict[int, TagSummary] = {}
    records = store.query()
    by_tag: dict[int, list[TelemetryRecord]] = {}
    for r in records:
        by_tag.setdefault(r.tag_id, []).append(r)
    for tag_id, recs in sorted(by_tag.items()):
        temps = [r.temp_c for r in recs if r.type == "temperature"]
        per_tag[tag_id] = TagSummary(
            tag_id=tag_id,
            activity_count=sum(1 for r in recs if r.type == "activity"),
            temperature_count=len(temps),
            first_seen_ms=min(r.ts_ms for r in recs),
            last_seen_ms=max(r.ts_ms for r in recs),
            temp_min_c=min(temps) if temps else None,
            temp_mean_c=math.fsum(temps) / len(temps) if temps else None,
            temp_max_c=max(temps) if temps else None,
        )
    return ReportSummary(per_tag=per_tag, published=metrics.published,
                         expired=metrics.expired, auth_failures=metrics.auth_failures,
                         dropped=metrics.dropped)


def report_text(summary: ReportSummary) -> str:
    lines = ["tag telemetry summary", "---------------------"]
    if not summary.per_tag:
        lines.append("no records stored")
    for tag_id, s in summary.per_tag.items():
        lines.append(
            f"tag {tag_id:#010x}: activity={s.activity_count} temperature={s.temperature_count} "
            f"seen {s.first_seen_ms}..{s.last_seen_ms} ms"
        )
        if s.temperature_count:
            lines.append(
                f"  temp_c min/mean/max = {s.temp_min_c:.1f}/{s.temp_mean_c:.2f}/{s.temp_max_c:.1f}"
            )
    lines.append(
        f"totals: published={summary.published} expired={summary.expired} "
        f"auth_failures={summary.auth_failures} dropped={summary.dropped}"
    )
    return "\n".join(lines)
