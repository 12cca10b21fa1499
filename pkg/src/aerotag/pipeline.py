"""Bridge reception, gateway relay, and the decryption service.

The pipeline stages communicate with immutable messages only: sealed packets
become BridgeFrames, frames survive (or not) the interference-afflicted
gateway uplink, and surviving frames are decrypted into PublishedMessages
within a timeliness window. Stage-internal state (the dedup window, the
metrics counters) is confined to one stage each, so the stages can run
inline or on separate threads with identical results.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import AuthFailure, Expired, InvariantViolation, UnknownTag
from .rf import RadioParams, delivery_probability
from .tag import EncryptedPacket, PacketType, decrypt_packet

BRIDGE_DEDUP_WINDOW_S = 10.0
DEFAULT_UPLINK_LATENCY_S = 0.5
DEFAULT_EXPIRY_WINDOW_S = 60.0

MESSAGE_FIELDS = ("ts_ms", "gateway_id", "bridge_id", "tag_id", "type", "seq", "temp_c")


@dataclass(frozen=True)
class BridgeFrame:
    bridge_id: str
    packet: EncryptedPacket
    rssi_dbm: float
    rx_time_s: float

    def __post_init__(self):
        if self.rx_time_s < self.packet.tx_time_s:
            raise InvariantViolation("frame received before it was transmitted")


@dataclass(frozen=True)
class PublishedMessage:
    ts_ms: int
    gateway_id: str
    bridge_id: str
    tag_id: int
    type: str  # "activity" | "temperature"
    seq: int
    temp_c: float | None = None

    def __post_init__(self):
        if self.ts_ms < 0:
            raise InvariantViolation("ts_ms must be non-negative")
        if (self.temp_c is not None) != (self.type == "temperature"):
            raise InvariantViolation("temp_c present iff type is temperature")


@dataclass
class BridgeState:
    """Per-bridge dedup memory: (tag_id, nonce) of recently accepted frames."""

    bridge_id: str
    window_s: float = BRIDGE_DEDUP_WINDOW_S
    _seen: dict = field(default_factory=dict)


def bridge_ingest(state: BridgeState, e: EncryptedPacket, rssi_dbm: float,
                  now_s: float) -> BridgeFrame | None:
    """Wrap a received packet, or return None for a duplicate.

    A (tag_id, nonce) pair is a duplicate while the frame that first carried
    it was accepted less than window_s ago; duplicates do not refresh the
    window, so a nonce re-heard after expiry is accepted again.
    """
    key = (e.tag_id, e.nonce)
    accepted_at = state._seen.get(key)
    if accepted_at is not None and now_s - accepted_at < state.window_s:
        return None
    state._seen[key] = now_s
    if len(state._seen) > 4096:  # drop stale entries opportunistically
        cutoff = now_s - state.window_s
        state._seen = {k: t for k, t in state._seen.items() if t >= cutoff}
    return BridgeFrame(bridge_id=state.bridge_id, packet=e, rssi_dbm=rssi_dbm, rx_time_s=now_s)


@dataclass(frozen=True)
class RelayOutcome:
    delivered: bool
    arrival_s: float | None
    snr_db: float


def gateway_relay(frame: BridgeFrame, uplink: RadioParams, noise_dbm: float, rng,
                  latency_s: float = DEFAULT_UPLINK_LATENCY_S) -> RelayOutcome:
    """Attempt the cellular hop for one frame.

    The uplink's eirp_dbm + rx_gain_dbi is treated as the effective received
    carrier level of the serving cell (the cellular geometry itself is not
    modelled); noise_dbm is the motor-interference contribution at the
    gateway's mounting point.
    """
    signal_dbm = uplink.eirp_dbm + uplink.rx_gain_dbi
    snr_db = signal_dbm - max(uplink.noise_floor_dbm, noise_dbm)
    if signal_dbm < uplink.sensitivity_dbm:
        return RelayOutcome(False, None, snr_db)
    if rng.random() < delivery_probability(snr_db):
        return RelayOutcome(True, frame.rx_time_s + latency_s, snr_db)
    return RelayOutcome(False, None, snr_db)


class Keystore:
    """tag_id -> 128-bit key registry standing in for the vendor decrypt cloud."""

    def __init__(self, keys: dict[int, bytes] | None = None):
        self._keys = dict(keys or {})

    def register(self, tag_id: int, key: bytes) -> None:
        if len(key) != 16:
            raise InvariantViolation("key must be 128 bits")
        self._keys[tag_id] = key

    def lookup(self, tag_id: int) -> bytes:
        try:
            return self._keys[tag_id]
        except KeyError:
            raise UnknownTag(f"no key registered for tag {tag_id:#010x}") from None


def decrypt_service(ks: Keystore, frame: BridgeFrame, now_s: float,
                    expiry_window_s: float = DEFAULT_EXPIRY_WINDOW_S,
                    gateway_id: str = "gw01") -> PublishedMessage:
    """Decrypt one relayed frame into a publishable message.

    Raises Expired when the packet is older than the timeliness window (the
    service cannot decode stale material), UnknownTag for unregistered ids,
    and AuthFailure for tampered or mis-keyed ciphertexts.
    """
    age_s = now_s - frame.packet.tx_time_s
    if age_s > expiry_window_s:
        raise Expired(f"packet age {age_s:.3f} s exceeds window {expiry_window_s} s")
    key = ks.lookup(frame.packet.tag_id)
    packet = decrypt_packet(key, frame.packet)
    return PublishedMessage(
        ts_ms=int(round(now_s * 1000.0)),
        gateway_id=gateway_id,
        bridge_id=frame.bridge_id,
        tag_id=packet.tag_id,
        type=PacketType(packet.type).wire_name,
        seq=packet.seq,
        temp_c=packet.temp_c,
    )


def serialize_message(m: PublishedMessage) -> bytes:
    """Canonical JSON: fixed key order, compact separators, temp_c omitted
    for activity messages."""
    obj = {
        "ts_ms": m.ts_ms,
        "gateway_id": m.gateway_id,
        "bridge_id": m.bridge_id,
        "tag_id": m.tag_id,
        "type": m.type,
        "seq": m.seq,
    }
    if m.temp_c is not None:
        obj["temp_c"] = m.temp_c
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def topic_for(gateway_id: str) -> str:
    return f"tags/v1/{gateway_id}/decrypted"


@dataclass
class RunMetrics:
    """Event counters shared by the pipeline stages; each field has a single
    writing stage so the counters stay race-free in threaded mode."""

    packet_tx: int = 0
    lost_uplink: int = 0
    bridge_rx: int = 0
    duplicates: int = 0
    relayed: int = 0
    delivered: int = 0
    dropped: int = 0
    published: int = 0
    expired: int = 0
    unknown_tag: int = 0
    auth_failures: int = 0
    stored: int = 0
    store_duplicates: int = 0
    in_flight_at_end: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(vars(self))
