"""Scenario configuration: the world around one simulated flight.

A scenario file describes the tag population, ambient temperature, the three
radio links (harvest downlink, tag advertisement link, gateway cellular
uplink), the motor-interference source with the phone mounting geometry, and
the run length and seed. YAML keys mirror the field names here one-to-one.

The interference defaults are calibration placeholders, not measurements:
they are set so that, with everything else at default, motor noise at the
payload-mount distance crushes the cellular hop while a phone on a table a
few meters away relays cleanly.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .geo import GeoPoint
from .rf import RadioParams, fspl_db
from .tag import (
    DEFAULT_ACTIVATION_ENERGY_J,
    DEFAULT_ADV_INTERVAL_S,
    DEFAULT_HARVEST_EFFICIENCY,
    DEFAULT_TEMP_EVERY_N,
    DEFAULT_TX_COST_J,
    TagConfig,
)

# Harvest emitter calibrated so the activation range is exactly 10 m: the
# tag's harvest sensitivity equals the received level at 10 m.
HARVEST_CALIBRATION_RANGE_M = 10.0
DEFAULT_HARVEST_EIRP_DBM = 30.0
DEFAULT_HARVEST_FREQ_HZ = 918e6
DEFAULT_HARVEST_SENSITIVITY_DBM = (
    DEFAULT_HARVEST_EIRP_DBM - fspl_db(DEFAULT_HARVEST_FREQ_HZ, HARVEST_CALIBRATION_RANGE_M)
)


def default_harvest_radio() -> RadioParams:
    return RadioParams(eirp_dbm=DEFAULT_HARVEST_EIRP_DBM, rx_gain_dbi=0.0,
                       freq_hz=DEFAULT_HARVEST_FREQ_HZ,
                       sensitivity_dbm=DEFAULT_HARVEST_SENSITIVITY_DBM,
                       noise_floor_dbm=-100.0)


def default_tag_link_radio() -> RadioParams:
    # Weak tag transmitter plus the bridge's high-gain directional antenna;
    # detection range comfortably exceeds the 10 m harvest range, so the
    # harvest link is the binding constraint.
    return RadioParams(eirp_dbm=-10.0, rx_gain_dbi=12.0, freq_hz=2.44e9,
                       sensitivity_dbm=-90.0, noise_floor_dbm=-100.0)


def default_uplink_radio() -> RadioParams:
    # eirp_dbm here is the effective received carrier at the serving cell;
    # the cellular path itself is out of model scope.
    return RadioParams(eirp_dbm=-60.0, rx_gain_dbi=0.0, freq_hz=1.9e9,
                       sensitivity_dbm=-150.0, noise_floor_dbm=-90.0)


# Phone mounting distance from the motor-noise reference point, meters.
PHONE_MOUNT_OFFSET_M = {
    "default": 0.15,
    "in_payload": 0.15,
    "on_top": 0.10,
}
DEFAULT_TABLE_DIST_M = 3.0

DEFAULT_INTERFERENCE_POWER_DBM_AT_REF = -54.5
DEFAULT_INTERFERENCE_REF_M = 0.15
DEFAULT_INTERFERENCE_DECAY_EXP = 2.0


@dataclass(frozen=True)
class InterferenceConfig:
    """Static part of the motor-noise source; position and activity bind at
    run time to the drone body and motor state."""

    enabled: bool = False
    power_dbm_at_ref: float = DEFAULT_INTERFERENCE_POWER_DBM_AT_REF
    ref_m: float = DEFAULT_INTERFERENCE_REF_M
    decay_exp: float = DEFAULT_INTERFERENCE_DECAY_EXP
    target: str = "gateway"  # "gateway" | "tag_link"

    def __post_init__(self):
        if self.target not in ("gateway", "tag_link"):
            raise ConfigError(f"interference target {self.target!r} unknown")


@dataclass(frozen=True)
class ScenarioTag:
    config: TagConfig
    rx_gain_offset_db: float = 0.0  # orientation proxy


@dataclass(frozen=True)
class AmbientSchedule:
    """Piecewise-constant ambient temperature over simulated time."""

    points: tuple[tuple[float, float], ...]  # (t_s, celsius), t ascending

    def at(self, t_s: float) -> float:
        value = self.points[0][1]
        for t, c in self.points:
            if t_s >= t:
                value = c
            else:
                break
        return value


@dataclass(frozen=True)
class ScenarioConfig:
    tags: tuple[ScenarioTag, ...]
    ambient: AmbientSchedule
    drone_radios: RadioParams
    tag_link: RadioParams
    uplink: RadioParams
    interference: InterferenceConfig
    phone_mode: str = "default"
    table_dist_m: float = DEFAULT_TABLE_DIST_M
    phone_offset_m: tuple[float, float, float] | None = None
    armed_override: bool | None = None
    duration_s: float = 180.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.phone_mode not in ("default", "in_payload", "on_top", "on_table"):
            raise ConfigError(f"phone_mode {self.phone_mode!r} unknown")
        seen = set()
        for st in self.tags:
            if st.config.tag_id in seen:
                raise ConfigError(f"duplicate tag_id {st.config.tag_id}")
            seen.add(st.config.tag_id)

    def phone_distance_m(self) -> float:
        """Gateway phone's distance from the motor-noise source."""
        if self.phone_offset_m is not None:
            x, y, z = self.phone_offset_m
            return (x * x + y * y + z * z) ** 0.5
        if self.phone_mode == "on_table":
            return self.table_dist_m
        return PHONE_MOUNT_OFFSET_M[self.phone_mode]


_RADIO_KEYS = ("eirp_dbm", "rx_gain_dbi", "freq_hz", "sensitivity_dbm", "noise_floor_dbm")
_TAG_KEYS = ("tag_id", "key_hex", "lat", "lon", "rx_gain_offset_db", "harvest_efficiency",
             "activation_energy_j", "tx_cost_j", "adv_interval_s", "temp_every_n")
_INTERFERENCE_KEYS = ("enabled", "power_dbm_at_ref", "ref_m", "decay_exp", "target")
_TOP_KEYS = ("tags", "ambient_c", "drone_radios", "tag_link", "uplink", "interference",
             "phone_mode", "table_dist_m", "phone_offset_m", "armed_override",
             "duration_s", "seed")


def _check_keys(doc: Mapping, allowed, where: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key '{key}'")


def _number(doc: Mapping, key: str, default=None, where: str = ""):
    value = doc.get(key, default)
    if value is None:
        raise ConfigError(f"{where}: missing key '{key}'")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: key '{key}' must be numeric")
    return float(value)


def _radio(doc, defaults: RadioParams, where: str) -> RadioParams:
    if doc is None:
        return defaults
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where}: must be a mapping")
    _check_keys(doc, _RADIO_KEYS, where)
    return RadioParams(
        eirp_dbm=_number(doc, "eirp_dbm", defaults.eirp_dbm, where),
        rx_gain_dbi=_number(doc, "rx_gain_dbi", defaults.rx_gain_dbi, where),
        freq_hz=_number(doc, "freq_hz", defaults.freq_hz, where),
        sensitivity_dbm=_number(doc, "sensitivity_dbm", defaults.sensitivity_dbm, where),
        noise_floor_dbm=_number(doc, "noise_floor_dbm", defaults.noise_floor_dbm, where),
    )


def _tag(doc, index: int) -> ScenarioTag:
    where = f"tags[{index}]"
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where}: must be a mapping")
    _check_keys(doc, _TAG_KEYS, where)
    for key in ("tag_id", "key_hex", "lat", "lon"):
        if key not in doc:
            raise ConfigError(f"{where}: missing key '{key}'")
    key_hex = doc["key_hex"]
    if not isinstance(key_hex, str):
        raise ConfigError(f"{where}: key_hex must be a hex string")
    try:
        key = bytes.fromhex(key_hex)
    except ValueError:
        raise ConfigError(f"{where}: key_hex is not valid hex") from None
    if len(key) != 16:
        raise ConfigError(f"{where}: key_hex must encode 16 bytes")
    tag_id = doc["tag_id"]
    if isinstance(tag_id, bool) or not isinstance(tag_id, int):
        raise ConfigError(f"{where}: tag_id must be an integer")
    temp_every_n = doc.get("temp_every_n", DEFAULT_TEMP_EVERY_N)
    if isinstance(temp_every_n, bool) or not isinstance(temp_every_n, int):
        raise ConfigError(f"{where}: temp_every_n must be an integer")
    cfg = TagConfig(
        tag_id=tag_id,
        key=key,
        pos=GeoPoint(_number(doc, "lat", where=where), _number(doc, "lon", where=where), 0.0),
        harvest_efficiency=_number(doc, "harvest_efficiency", DEFAULT_HARVEST_EFFICIENCY, where),
        activation_energy_j=_number(doc, "activation_energy_j", DEFAULT_ACTIVATION_ENERGY_J, where),
        tx_cost_j=_number(doc, "tx_cost_j", DEFAULT_TX_COST_J, where),
        adv_interval_s=_number(doc, "adv_interval_s", DEFAULT_ADV_INTERVAL_S, where),
        temp_every_n=temp_every_n,
    )
    return ScenarioTag(config=cfg,
                       rx_gain_offset_db=_number(doc, "rx_gain_offset_db", 0.0, where))


def _ambient(doc) -> AmbientSchedule:
    if isinstance(doc, (int, float)) and not isinstance(doc, bool):
        return AmbientSchedule(points=((0.0, float(doc)),))
    if isinstance(doc, Sequence) and not isinstance(doc, (str, bytes)) and doc:
        points = []
        for i, entry in enumerate(doc):
            if not isinstance(entry, Mapping):
                raise ConfigError(f"ambient_c[{i}]: must be a mapping with t_s and c")
            _check_keys(entry, ("t_s", "c"), f"ambient_c[{i}]")
            points.append((_number(entry, "t_s", where=f"ambient_c[{i}]"),
                           _number(entry, "c", where=f"ambient_c[{i}]")))
        if points != sorted(points, key=lambda p: p[0]):
            raise ConfigError("ambient_c schedule must be time-ascending")
        return AmbientSchedule(points=tuple(points))
    raise ConfigError("ambient_c must be a number or a schedule list")


def _interference(doc) -> InterferenceConfig:
    if doc is None:
        return InterferenceConfig(enabled=False)
    if not isinstance(doc, Mapping):
        raise ConfigError("interference: must be a mapping")
    _check_keys(doc, _INTERFERENCE_KEYS, "interference")
    enabled = doc.get("enabled", True)
    if not isinstance(enabled, bool):
        raise ConfigError("interference: enabled must be a boolean")
    target = doc.get("target", "gateway")
    return InterferenceConfig(
        enabled=enabled,
        power_dbm_at_ref=_number(doc, "power_dbm_at_ref",
                                 DEFAULT_INTERFERENCE_POWER_DBM_AT_REF, "interference"),
        ref_m=_number(doc, "ref_m", DEFAULT_INTERFERENCE_REF_M, "interference"),
        decay_exp=_number(doc, "decay_exp", DEFAULT_INTERFERENCE_DECAY_EXP, "interference"),
        target=target,
    )


def load_scenario(text: str) -> ScenarioConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario file must be a mapping")
    _check_keys(doc, _TOP_KEYS, "top level")

    tag_docs = doc.get("tags", [])
    if tag_docs is None:
        tag_docs = []
    if not isinstance(tag_docs, Sequence) or isinstance(tag_docs, (str, bytes)):
        raise ConfigError("tags must be a list")
    tags = tuple(_tag(t, i) for i, t in enumerate(tag_docs))

    phone_offset = doc.get("phone_offset_m")
    if phone_offset is not None:
        if (not isinstance(phone_offset, Sequence) or isinstance(phone_offset, (str, bytes))
                or len(phone_offset) != 3):
            raise ConfigError("phone_offset_m must be a 3-element list")
        phone_offset = tuple(float(v) for v in phone_offset)

    armed_override = doc.get("armed_override")
    if armed_override is not None and not isinstance(armed_override, bool):
        raise ConfigError("armed_override must be a boolean when present")

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    phone_mode = doc.get("phone_mode", "default")
    if not isinstance(phone_mode, str):
        raise ConfigError("phone_mode must be a string")

    return ScenarioConfig(
        tags=tags,
        ambient=_ambient(doc.get("ambient_c", 20.0)),
        drone_radios=_radio(doc.get("drone_radios"), default_harvest_radio(), "drone_radios"),
        tag_link=_radio(doc.get("tag_link"), default_tag_link_radio(), "tag_link"),
        uplink=_radio(doc.get("uplink"), default_uplink_radio(), "uplink"),
        interference=_interference(doc.get("interference")),
        phone_mode=phone_mode,
        table_dist_m=_number(doc, "table_dist_m", DEFAULT_TABLE_DIST_M, "top level"),
        phone_offset_m=phone_offset,
        armed_override=armed_override,
        duration_s=_number(doc, "duration_s", 180.0, "top level"),
        seed=seed,
    )
