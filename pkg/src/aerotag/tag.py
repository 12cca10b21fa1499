"""Battery-less sensor tag: energy buffer, packet encoding, and AEAD sealing.

A tag charges from incident RF power, activates once its buffer crosses the
activation threshold, and then broadcasts sealed advertisement packets at a
fixed cadence until the buffer drains below the deactivation threshold
(half the activation energy, giving hysteresis against chattering).

Packet layout (big-endian, normative for golden-vector tests):

    tag_id(4) | type(1) | seq(8) | temp_decideg(2, signed, TEMPERATURE only) | channel(1)

Sealing is AES-128-GCM with a 96-bit nonce of tag_id(4) || seq(8) and the
type byte as associated data; seq monotonicity keeps nonces unique per key.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, replace

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthFailure, DecodeError, InvalidDt, InvariantViolation
from .geo import GeoPoint
from .rf import harvested_power_w

ADVERTISEMENT_CHANNELS = (37, 38, 39)

DEFAULT_HARVEST_EFFICIENCY = 0.3
DEFAULT_ACTIVATION_ENERGY_J = 50e-6
DEFAULT_TX_COST_J = 10e-6
DEFAULT_ADV_INTERVAL_S = 1.0
DEFAULT_TEMP_EVERY_N = 5
DEACTIVATION_RATIO = 0.5

GCM_TAG_BYTES = 16
_ACTIVITY_PLAIN_LEN = 14
_TEMPERATURE_PLAIN_LEN = 16

# Guard against float jitter when the advertisement cadence lands exactly on
# a simulation step boundary.
_TIME_EPS_S = 1e-9


class PacketType(enum.IntEnum):
    ACTIVITY = 0x01
    TEMPERATURE = 0x02

    @property
    def wire_name(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class TagConfig:
    tag_id: int
    key: bytes
    pos: GeoPoint
    harvest_efficiency: float = DEFAULT_HARVEST_EFFICIENCY
    activation_energy_j: float = DEFAULT_ACTIVATION_ENERGY_J
    tx_cost_j: float = DEFAULT_TX_COST_J
    adv_interval_s: float = DEFAULT_ADV_INTERVAL_S
    temp_every_n: int = DEFAULT_TEMP_EVERY_N

    def __post_init__(self):
        if not 0 <= self.tag_id < 2 ** 32:
            raise InvariantViolation(f"tag_id {self.tag_id} not a 32-bit value")
        if len(self.key) != 16:
            raise InvariantViolation("key must be 128 bits")
        if not 0.0 < self.harvest_efficiency <= 1.0:
            raise InvariantViolation("harvest_efficiency outside (0, 1]")
        if self.tx_cost_j >= self.activation_energy_j:
            raise InvariantViolation("tx_cost_j must be below activation_energy_j")
        if self.adv_interval_s <= 0:
            raise InvariantViolation("adv_interval_s must be positive")
        if self.temp_every_n < 1:
            raise InvariantViolation("temp_every_n must be >= 1")

    @property
    def deactivation_energy_j(self) -> float:
        return DEACTIVATION_RATIO * self.activation_energy_j


@dataclass(frozen=True)
class TagState:
    energy_j: float = 0.0
    active: bool = False
    seq: int = 0
    last_tx_s: float = -math.inf


@dataclass(frozen=True)
class TagPacket:
    """Plaintext advertisement; temp_c present iff type is TEMPERATURE."""

    tag_id: int
    type: PacketType
    seq: int
    temp_c: float | None
    channel: int

    def __post_init__(self):
        if (self.temp_c is not None) != (self.type is PacketType.TEMPERATURE):
            raise InvariantViolation("temp_c present iff packet type is TEMPERATURE")
        if self.channel not in ADVERTISEMENT_CHANNELS:
            raise InvariantViolation(f"channel {self.channel} not an advertisement channel")


@dataclass(frozen=True)
class EncryptedPacket:
    """AEAD-sealed advertisement as it leaves the tag antenna."""

    tag_id: int
    nonce: bytes
    ciphertext: bytes  # includes the 16-byte auth tag
    tx_time_s: float


def encode_packet(p: TagPacket) -> bytes:
    if p.type is PacketType.TEMPERATURE:
        deci = round(p.temp_c * 10.0)
        if not -(2 ** 15) <= deci < 2 ** 15:
            raise InvariantViolation(f"temperature {p.temp_c} out of int16 decidegree range")
        return struct.pack(">IBQhB", p.tag_id, p.type, p.seq, deci, p.channel)
    return struct.pack(">IBQB", p.tag_id, p.type, p.seq, p.channel)


def decode_packet(data: bytes) -> TagPacket:
    if len(data) == _ACTIVITY_PLAIN_LEN:
        tag_id, ptype, seq, channel = struct.unpack(">IBQB", data)
        temp_c = None
    elif len(data) == _TEMPERATURE_PLAIN_LEN:
        tag_id, ptype, seq, deci, channel = struct.unpack(">IBQhB", data)
        temp_c = deci / 10.0
    else:
        raise DecodeError(f"bad packet length {len(data)}")
    try:
        ptype = PacketType(ptype)
    except ValueError:
        raise DecodeError(f"unknown packet type byte {ptype:#x}") from None
    if (ptype is PacketType.TEMPERATURE) != (temp_c is not None):
        raise DecodeError("packet length inconsistent with type byte")
    if channel not in ADVERTISEMENT_CHANNELS:
        raise DecodeError(f"channel {channel} not an advertisement channel")
    return TagPacket(tag_id=tag_id, type=ptype, seq=seq, temp_c=temp_c, channel=channel)


def packet_nonce(tag_id: int, seq: int) -> bytes:
    """96-bit nonce: tag_id(32) || seq(64)."""
    return struct.pack(">IQ", tag_id, seq)


def encrypt_packet(key: bytes, plain: bytes, nonce: bytes, aad: bytes) -> bytes:
    """Seal plain under AES-128-GCM; deterministic in (key, nonce, plain, aad)."""
    return AESGCM(key).encrypt(nonce, plain, aad)


def decrypt_packet(key: bytes, e: EncryptedPacket) -> TagPacket:
    """Authenticate and decode a sealed packet.

    The AAD (the type byte) is recovered from the ciphertext length, which
    the fixed packet layout makes unambiguous.
    """
    if len(e.ciphertext) == _ACTIVITY_PLAIN_LEN + GCM_TAG_BYTES:
        aad_type = PacketType.ACTIVITY
    elif len(e.ciphertext) == _TEMPERATURE_PLAIN_LEN + GCM_TAG_BYTES:
        aad_type = PacketType.TEMPERATURE
    else:
        raise AuthFailure(f"ciphertext length {len(e.ciphertext)} matches no packet layout")
    try:
        plain = AESGCM(key).decrypt(e.nonce, e.ciphertext, bytes([aad_type]))
    except InvalidTag:
        raise AuthFailure(f"authentication failed for tag {e.tag_id:#010x}") from None
    packet = decode_packet(plain)
    if packet.type is not aad_type:
        raise DecodeError("plaintext type byte disagrees with AAD")
    if packet.tag_id != e.tag_id:
        raise DecodeError("plaintext tag id disagrees with clear header")
    return packet


def step_tag(cfg: TagConfig,
             st: TagState,
             incident_dbm: float,
             ambient_c: float,
             now_s: float,
             dt_s: float,
             rng,
             harvest_sensitivity_dbm: float) -> tuple[TagState, list[EncryptedPacket]]:
    """Advance one tag by dt_s under the given incident field.

    Energy bookkeeping is exact: energy' = energy + harvested*dt - tx_cost*emitted,
    floored at zero only by construction (a tag never spends below the
    deactivation threshold minus one transmission).
    """
    if dt_s <= 0:
        raise InvalidDt(f"dt_s {dt_s} must be positive")

    energy = st.energy_j + harvested_power_w(incident_dbm, cfg.harvest_efficiency,
                                             harvest_sensitivity_dbm) * dt_s
    active = st.active
    if not active and energy >= cfg.activation_energy_j:
        active = True

    packets: list[EncryptedPacket] = []
    seq = st.seq
    last_tx = st.last_tx_s
    if active and now_s - last_tx >= cfg.adv_interval_s - _TIME_EPS_S and energy >= cfg.tx_cost_j:
        if seq % cfg.temp_every_n == 0:
            temp_c = round(ambient_c * 10.0) / 10.0
            packet = TagPacket(cfg.tag_id, PacketType.TEMPERATURE, seq, temp_c,
                               rng.choice(ADVERTISEMENT_CHANNELS))
        else:
            packet = TagPacket(cfg.tag_id, PacketType.ACTIVITY, seq, None,
                               rng.choice(ADVERTISEMENT_CHANNELS))
        sealed = encrypt_packet(cfg.key, encode_packet(packet),
                                packet_nonce(cfg.tag_id, seq), bytes([packet.type]))
        packets.append(EncryptedPacket(cfg.tag_id, packet_nonce(cfg.tag_id, seq),
                                       sealed, now_s))
        energy -= cfg.tx_cost_j
        seq += 1
        last_tx = now_s

    if active and energy < cfg.deactivation_energy_j:
        active = False

    return replace(st, energy_j=energy, active=active, seq=seq, last_tx_s=last_tx), packets
