"""Telemetry store: schema enforcement, idempotent append, query, report."""

from __future__ import annotations

import json

import pytest

from aerotag.errors import InvariantViolation, SchemaError, StorageFull
from aerotag.pipeline import RunMetrics
from aerotag.store import (
    QueryFilter,
    TelemetryRecord,
    TelemetryStore,
    parse_message,
    record_line,
    report,
    report_text,
)


def rec(tag_id=1, seq=0, type="temperature", ts_ms=1000, temp_c=23.4,
        gateway_id="gw01", bridge_id="b01") -> TelemetryRecord:
    if type != "temperature":
        temp_c = None
    return TelemetryRecord(ts_ms=ts_ms, tag_id=tag_id, type=type, seq=seq,
                           temp_c=temp_c, gateway_id=gateway_id, bridge_id=bridge_id)


# --- parse_message ------------------------------------------------------------


def canonical(temp=True) -> bytes:
    obj = {"ts_ms": 1000, "gateway_id": "gw01", "bridge_id": "b01",
           "tag_id": 1, "type": "temperature" if temp else "activity", "seq": 4}
    if temp:
        obj["temp_c"] = 23.4
    return json.dumps(obj, separators=(",", ":")).encode()


def test_parse_canonical_temperature():
    r = parse_message(canonical())
    assert r.temp_c == 23.4
    assert r.type == "temperature"


def test_parse_missing_seq():
    obj = json.loads(canonical())
    del obj["seq"]
    with pytest.raises(SchemaError, match="seq"):
        parse_message(json.dumps(obj).encode())


def test_parse_unknown_key_rejected():
    obj = json.loads(canonical())
    obj["rssi"] = -40
    with pytest.raises(SchemaError, match="rssi"):
        parse_message(json.dumps(obj).encode())


def test_parse_activity_with_temp_rejected():
    obj = json.loads(canonical(temp=False))
    obj["temp_c"] = 1.0
    with pytest.raises(SchemaError):
        parse_message(json.dumps(obj).encode())


def test_parse_bad_type_value():
    obj = json.loads(canonical())
    obj["type"] = "humidity"
    with pytest.raises(SchemaError):
        parse_message(json.dumps(obj).encode())


def test_parse_not_json():
    with pytest.raises(SchemaError):
        parse_message(b"\xff\x00 nope")


# --- append / query -------------------------------------------------------------


def test_append_fresh_and_duplicate():
    s = TelemetryStore()
    assert s.append(rec()) is True
    assert s.append(rec()) is False
    assert len(s) == 1


def test_append_same_seq_different_type():
    s = TelemetryStore()
    assert s.append(rec(seq=5, type="temperature"))
    assert s.append(rec(seq=5, type="activity"))
    assert len(s) == 2


def test_append_idempotent_on_replayed_stream():
    stream = [rec(seq=i) for i in range(10)] + [rec(tag_id=2, seq=i) for i in range(5)]
    s1 = TelemetryStore()
    for r in stream:
        s1.append(r)
    s2 = TelemetryStore()
    for r in stream + stream:
        s2.append(r)
    assert s1.query() == s2.query()


def test_storage_cap():
    s = TelemetryStore(max_records=2)
    s.append(rec(seq=0))
    s.append(rec(seq=1))
    with pytest.raises(StorageFull):
        s.append(rec(seq=2))


def test_store_persists_jsonl(tmp_path):
    path = tmp_path / "records.jsonl"
    s = TelemetryStore(path=path)
    s.append(rec(seq=0))
    s.append(rec(seq=1, type="activity"))
    s.close()
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    first = json.loads(lines[0])
    assert list(first.keys()) == ["ts_ms", "gateway_id", "bridge_id", "tag_id",
                                  "type", "seq", "temp_c"]
    assert record_line(rec(seq=0)) == lines[0]


def test_query_empty_store():
    assert TelemetryStore().query() == []


def test_query_sorted_and_filtered():
    s = TelemetryStore()
    s.append(rec(tag_id=2, seq=0, ts_ms=3000))
    s.append(rec(tag_id=1, seq=0, ts_ms=1000))
    s.append(rec(tag_id=1, seq=1, ts_ms=2000, type="activity"))
    everything = s.query()
    assert [r.ts_ms for r in everything] == [1000, 2000, 3000]
    only_tag1 = s.query(QueryFilter(tag_id=1))
    assert len(only_tag1) == 2
    temp_only = s.query(QueryFilter(type="temperature"))
    assert len(temp_only) == 2
    window = s.query(QueryFilter(t0_ms=1500, t1_ms=2500))
    assert [r.ts_ms for r in window] == [2000]
    assert s.query(QueryFilter(t0_ms=9000, t1_ms=9999)) == []


def test_query_stable_tiebreak():
    s = TelemetryStore()
    s.append(rec(tag_id=2, seq=1, ts_ms=1000))
    s.append(rec(tag_id=1, seq=2, ts_ms=1000))
    out = s.query()
    assert [(r.tag_id, r.seq) for r in out] == [(1, 2), (2, 1)]


def test_query_filter_invariant():
    with pytest.raises(InvariantViolation):
        QueryFilter(t0_ms=10, t1_ms=5)


# --- report ---------------------------------------------------------------------


def test_report_single_temperature_record():
    s = TelemetryStore()
    s.append(rec(temp_c=23.4))
    summary = report(s, RunMetrics(published=1, stored=1))
    tag = summary.per_tag[1]
    assert tag.temp_min_c == tag.temp_mean_c == tag.temp_max_c == 23.4
    assert tag.temperature_count == 1
    assert summary.published == 1


def test_report_activity_only_has_no_temp_stats():
    s = TelemetryStore()
    s.append(rec(type="activity"))
    summary = report(s, RunMetrics())
    tag = summary.per_tag[1]
    assert tag.temp_min_c is None and tag.temp_mean_c is None and tag.temp_max_c is None
    assert "temp_c" not in report_text(summary)


def test_report_counts_match_queries():
    s = TelemetryStore()
    for i in range(4):
        s.append(rec(seq=i, type="temperature", ts_ms=1000 + i))
    for i in range(3):
        s.append(rec(seq=100 + i, type="activity", ts_ms=2000 + i))
    summary = report(s, RunMetrics())
    tag = summary.per_tag[1]
    assert tag.temperature_count == len(s.query(QueryFilter(tag_id=1, type="temperature")))
    assert tag.activity_count == len(s.query(QueryFilter(tag_id=1, type="activity")))
    assert tag.first_seen_ms == 1000
    assert tag.last_seen_ms == 2002


def test_record_invariants():
    with pytest.raises(InvariantViolation):
        TelemetryRecord(ts_ms=0, tag_id=1, type="activity", seq=0, temp_c=1.0,
                        gateway_id="g", bridge_id="b")
