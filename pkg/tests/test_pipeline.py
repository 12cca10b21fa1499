"""Bridge dedup, gateway relay, decryption service, and message wire format."""

from __future__ import annotations

import json
import math
import random

import pytest

from aerotag.errors import AuthFailure, Expired, InvariantViolation, UnknownTag
from aerotag.pipeline import (
    BridgeFrame,
    BridgeState,
    Keystore,
    PublishedMessage,
    bridge_ingest,
    decrypt_service,
    gateway_relay,
    serialize_message,
    topic_for,
)
from aerotag.rf import NO_NOISE_DBM, RadioParams, delivery_probability
from aerotag.store import parse_message, record_from_message
from aerotag.tag import (
    EncryptedPacket,
    PacketType,
    TagPacket,
    encode_packet,
    encrypt_packet,
    packet_nonce,
)

KEY = bytes(range(16))


def sealed_packet(tag_id=1, seq=0, ptype=PacketType.TEMPERATURE, temp=23.4,
                  tx_time_s=0.0, key=KEY) -> EncryptedPacket:
    p = TagPacket(tag_id, ptype, seq, temp if ptype is PacketType.TEMPERATURE else None, 37)
    ct = encrypt_packet(key, encode_packet(p), packet_nonce(tag_id, seq), bytes([ptype]))
    return EncryptedPacket(tag_id, packet_nonce(tag_id, seq), ct, tx_time_s)


def uplink(eirp=-60.0, noise_floor=-90.0) -> RadioParams:
    return RadioParams(eirp_dbm=eirp, rx_gain_dbi=0.0, freq_hz=1.9e9,
                       sensitivity_dbm=-150.0, noise_floor_dbm=noise_floor)


# --- bridge -----------------------------------------------------------------


def test_bridge_first_sight_wraps():
    st = BridgeState("bridge01")
    frame = bridge_ingest(st, sealed_packet(seq=0), -40.0, 1.0)
    assert isinstance(frame, BridgeFrame)
    assert frame.rx_time_s == 1.0
    assert frame.bridge_id == "bridge01"


def test_bridge_duplicate_within_window():
    st = BridgeState("bridge01")
    e = sealed_packet(seq=0)
    assert bridge_ingest(st, e, -40.0, 1.0) is not None
    assert bridge_ingest(st, e, -42.0, 5.0) is None


def test_bridge_accepts_after_window_expiry():
    st = BridgeState("bridge01")
    e = sealed_packet(seq=0)
    assert bridge_ingest(st, e, -40.0, 1.0) is not None
    assert bridge_ingest(st, e, -40.0, 11.5) is not None


def test_bridge_frame_causality():
    with pytest.raises(InvariantViolation):
        BridgeFrame("b", sealed_packet(tx_time_s=5.0), -40.0, 4.0)


# --- relay ------------------------------------------------------------------


def test_relay_strong_link_probability():
    up = uplink()  # snr = 30 dB clean
    p = delivery_probability(up.eirp_dbm - up.noise_floor_dbm)
    assert p > 0.999


def test_relay_delivery_and_latency():
    frame = BridgeFrame("b", sealed_packet(tx_time_s=2.0), -40.0, 2.0)
    rng = random.Random(1)
    out = gateway_relay(frame, uplink(), NO_NOISE_DBM, rng, latency_s=0.5)
    assert out.delivered
    assert out.arrival_s == pytest.approx(2.5)
    assert out.snr_db == pytest.approx(30.0)


def test_relay_montecarlo_at_snr50():
    # noise forces snr to exactly the logistic midpoint
    up = uplink()
    noise = up.eirp_dbm - 3.0
    frame = BridgeFrame("b", sealed_packet(tx_time_s=0.0), -40.0, 0.0)
    rng = random.Random(42)
    n = 10_000
    hits = sum(gateway_relay(frame, up, noise, rng).delivered for _ in range(n))
    assert hits / n == pytest.approx(0.5, abs=0.02)


def test_relay_motor_noise_crushes_link():
    up = uplink()
    noise = up.eirp_dbm + 10.0  # snr = -10 dB
    frame = BridgeFrame("b", sealed_packet(tx_time_s=0.0), -40.0, 0.0)
    rng = random.Random(7)
    hits = sum(gateway_relay(frame, up, noise, rng).delivered for _ in range(2000))
    assert hits == 0


# --- decrypt service ----------------------------------------------------------


def keystore() -> Keystore:
    return Keystore({1: KEY})


def test_decrypt_service_publishes():
    frame = BridgeFrame("b01", sealed_packet(seq=3, tx_time_s=10.0), -40.0, 10.0)
    msg = decrypt_service(keystore(), frame, 10.5)
    assert msg.tag_id == 1
    assert msg.seq == 3
    assert msg.type == "temperature"
    assert msg.temp_c == 23.4
    assert msg.ts_ms == 10500
    assert msg.bridge_id == "b01"


def test_decrypt_service_expiry():
    frame = BridgeFrame("b01", sealed_packet(tx_time_s=0.0), -40.0, 0.0)
    with pytest.raises(Expired):
        decrypt_service(keystore(), frame, 60.001, expiry_window_s=60.0)
    # at the window boundary the packet still decodes
    msg = decrypt_service(keystore(), frame, 60.0, expiry_window_s=60.0)
    assert msg.seq == 0


def test_decrypt_service_unknown_tag():
    frame = BridgeFrame("b01", sealed_packet(tag_id=99, tx_time_s=0.0), -40.0, 0.0)
    with pytest.raises(UnknownTag):
        decrypt_service(keystore(), frame, 1.0)


def test_decrypt_service_wrong_key():
    ks = Keystore({1: bytes(16)})
    frame = BridgeFrame("b01", sealed_packet(tx_time_s=0.0), -40.0, 0.0)
    with pytest.raises(AuthFailure):
        decrypt_service(ks, frame, 1.0)


# --- wire format ----------------------------------------------------------------


def test_serialize_activity_omits_temp():
    m = PublishedMessage(ts_ms=1000, gateway_id="gw01", bridge_id="b01",
                         tag_id=1, type="activity", seq=9)
    data = serialize_message(m)
    obj = json.loads(data)
    assert "temp_c" not in obj
    assert list(obj.keys()) == ["ts_ms", "gateway_id", "bridge_id", "tag_id", "type", "seq"]


def test_serialize_temperature_key_order():
    m = PublishedMessage(ts_ms=1000, gateway_id="gw01", bridge_id="b01",
                         tag_id=1, type="temperature", seq=9, temp_c=23.4)
    obj = json.loads(serialize_message(m))
    assert list(obj.keys()) == ["ts_ms", "gateway_id", "bridge_id", "tag_id", "type",
                                "seq", "temp_c"]
    assert obj["temp_c"] == 23.4


def test_serialize_parse_roundtrip():
    m = PublishedMessage(ts_ms=1000, gateway_id="gw01", bridge_id="b01",
                         tag_id=7, type="temperature", seq=3, temp_c=-4.5)
    rec = parse_message(serialize_message(m))
    assert rec == record_from_message(m)


def test_topic_for():
    assert topic_for("gw01") == "tags/v1/gw01/decrypted"


def test_message_invariants():
    with pytest.raises(InvariantViolation):
        PublishedMessage(ts_ms=-1, gateway_id="g", bridge_id="b", tag_id=1,
                         type="activity", seq=0)
    with pytest.raises(InvariantViolation):
        PublishedMessage(ts_ms=0, gateway_id="g", bridge_id="b", tag_id=1,
                         type="activity", seq=0, temp_c=1.0)
