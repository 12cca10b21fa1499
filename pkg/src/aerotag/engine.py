"""World stepping: drone FSM x tags x links x pipeline under one seeded clock.

The loop advances in fixed 0.1 s steps. Per step it (1) releases any relay
deliveries that have come due and runs them through decryption and storage,
(2) steps the flight state machine on the stored-telemetry view, and (3)
steps every tag, pushing each surviving advertisement into the pipeline.

The pipeline stages (bridge dedup, gateway relay, decrypt, ingest) are
message processors with stage-confined state. `run` drives them inline by
default; `pipeline_mode="threaded"` runs each stage on its own thread behind
FIFO queues with per-step watermark synchronization, which by construction
yields the identical event sequence and store - that equivalence is part of
the contract and is tested.

All randomness comes from named substreams of one run seed: `tag:<id>` for
channel hopping, `relay` for the cellular hop, `taglink` for advertisement
loss when interference targets that link. A component never consumes another
component's draws, so scenario edits perturb only what they touch.
"""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass, field

from .errors import (
    AuthFailure,
    ConfigError,
    CorruptLog,
    Expired,
    NonceReuse,
    PreflightFailed,
    UnknownTag,
)
from .geo import ElevationRaster, GeoPoint, slant_range_m
from .mission import (
    DroneState,
    FlightState,
    FsmInputs,
    MissionParams,
    fsm_step,
    initial_drone_state,
    preflight_check,
)
from .pipeline import (
    DEFAULT_EXPIRY_WINDOW_S,
    DEFAULT_UPLINK_LATENCY_S,
    BridgeState,
    Keystore,
    RunMetrics,
    bridge_ingest,
    decrypt_service,
    gateway_relay,
    serialize_message,
    topic_for,
)
from .rf import (
    MIN_PATH_DISTANCE_M,
    NO_NOISE_DBM,
    delivery_probability,
    motor_noise_at_offset_dbm,
    InterferenceSource,
    received_power_dbm,
)
from .rng import RngStreams
from .runlog import event
from .scenario import ScenarioConfig
from .store import TelemetryStore, parse_message
from .tag import EncryptedPacket, TagState, step_tag

DT_S = 0.1


def _seq_of(packet: EncryptedPacket) -> int:
    return int.from_bytes(packet.nonce[4:], "big")


def _type_of(packet: EncryptedPacket) -> str:
    # The fixed layout makes the sealed length unambiguous: 30 bytes is an
    # activity packet, 32 carries a temperature field.
    return "temperature" if len(packet.ciphertext) == 32 else "activity"


# ---------------------------------------------------------------------------
# Pipeline messages


@dataclass
class _Frame:
    packet: EncryptedPacket
    rssi_dbm: float
    t_s: float
    noise_dbm: float
    events: list = field(default_factory=list)


@dataclass
class _Release:
    frame: object
    arrival_s: float
    events: list = field(default_factory=list)


@dataclass
class _Bytes:
    payload: bytes | None
    arrival_s: float
    events: list = field(default_factory=list)


@dataclass
class _Tick:
    step: int
    events: list = field(default_factory=list)


@dataclass
class _End:
    events: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Pipeline stages


class _BridgeStage:
    def __init__(self, bridge_id: str, metrics: RunMetrics):
        self.state = BridgeState(bridge_id=bridge_id)
        self.metrics = metrics

    def process(self, msg):
        if not isinstance(msg, _Frame):
            return [msg]
        frame = bridge_ingest(self.state, msg.packet, msg.rssi_dbm, msg.t_s)
        if frame is None:
            self.metrics.duplicates += 1
            return [_Bytes(None, msg.t_s, msg.events)]
        self.metrics.bridge_rx += 1
        msg.events.append(event(msg.t_s, "bridge_rx",
                                tag_id=msg.packet.tag_id, seq=_seq_of(msg.packet),
                                rssi_dbm=round(msg.rssi_dbm, 3),
                                bridge_id=self.state.bridge_id))
        return [_FrameAccepted(frame, msg.noise_dbm, msg.events)]


@dataclass
class _FrameAccepted:
    frame: object
    noise_dbm: float
    events: list = field(default_factory=list)


class _RelayStage:
    def __init__(self, uplink, latency_s: float, dt_s: float, rng, metrics: RunMetrics):
        self.uplink = uplink
        self.latency_s = latency_s
        self.latency_steps = max(1, math.ceil(latency_s / dt_s - 1e-9))
        self.dt_s = dt_s
        self.rng = rng
        self.metrics = metrics
        self.pending: list[tuple[int, _Release]] = []

    def process(self, msg):
        if isinstance(msg, _FrameAccepted):
            self.metrics.relayed += 1
            frame = msg.frame
            outcome = gateway_relay(frame, self.uplink, msg.noise_dbm, self.rng,
                                    self.latency_s)
            if outcome.delivered:
                arrival_step = int(round(frame.rx_time_s / self.dt_s)) + self.latency_steps
                self.pending.append((arrival_step,
                                     _Release(frame, round(outcome.arrival_s, 6))))
                return [_Bytes(None, frame.rx_time_s, msg.events)]
            self.metrics.dropped += 1
            msg.events.append(event(frame.rx_time_s, "relay_drop",
                                    tag_id=frame.packet.tag_id,
                                    seq=_seq_of(frame.packet),
                                    snr_db=round(outcome.snr_db, 3)))
            return [_Bytes(None, frame.rx_time_s, msg.events)]
        if isinstance(msg, _Tick):
            due = sorted((p for p in self.pending if p[0] <= msg.step), key=lambda p: p[0])
            self.pending = [p for p in self.pending if p[0] > msg.step]
            self.metrics.delivered += len(due)  # delivered = handed to the service
            return [*(r for _, r in due), msg]
        if isinstance(msg, _End):
            self.metrics.in_flight_at_end = len(self.pending)
            return [msg]
        return [msg]


class _DecryptStage:
    def __init__(self, keystore: Keystore, expiry_window_s: float, gateway_id: str,
                 metrics: RunMetrics, publisher=None):
        self.keystore = keystore
        self.expiry_window_s = expiry_window_s
        self.gateway_id = gateway_id
        self.metrics = metrics
        self.publisher = publisher

    def process(self, msg):
        if not isinstance(msg, _Release):
            return [msg]
        frame = msg.frame
        try:
            published = decrypt_service(self.keystore, frame, msg.arrival_s,
                                        self.expiry_window_s, self.gateway_id)
        except Expired:
            self.metrics.expired += 1
            msg.events.append(event(msg.arrival_s, "expire",
                                    tag_id=frame.packet.tag_id,
                                    seq=_seq_of(frame.packet),
                                    age_s=round(msg.arrival_s - frame.packet.tx_time_s, 6)))
            return [_Bytes(None, msg.arrival_s, msg.events)]
        except UnknownTag:
            self.metrics.unknown_tag += 1
            return [_Bytes(None, msg.arrival_s, msg.events)]
        except AuthFailure:
            self.metrics.auth_failures += 1
            return [_Bytes(None, msg.arrival_s, msg.events)]
        self.metrics.published += 1
        payload = serialize_message(published)
        if self.publisher is not None:
            self.publisher.publish(topic_for(self.gateway_id), payload)
        ev = {"t_s": round(msg.arrival_s, 6), "kind": "publish",
              "ts_ms": published.ts_ms, "gateway_id": published.gateway_id,
              "bridge_id": published.bridge_id, "tag_id": published.tag_id,
              "type": published.type, "seq": published.seq}
        if published.temp_c is not None:
            ev["temp_c"] = published.temp_c
        msg.events.append(ev)
        return [_Bytes(payload, msg.arrival_s, msg.events)]


class _IngestStage:
    def __init__(self, store: TelemetryStore, metrics: RunMetrics):
        self.store = store
        self.metrics = metrics

    def process(self, msg):
        if isinstance(msg, _Bytes) and msg.payload is not None:
            rec = parse_message(msg.payload)
            inserted = self.store.append(rec)
            if inserted:
                self.metrics.stored += 1
            else:
                self.metrics.store_duplicates += 1
            msg.events.append(event(msg.arrival_s, "store", tag_id=rec.tag_id,
                                    seq=rec.seq, type=rec.type, inserted=inserted,
                                    ts_ms=rec.ts_ms))
        return [msg]


# ---------------------------------------------------------------------------
# Stage drivers: inline and threaded schedules with identical semantics


class _InlineDriver:
    """Runs the stage chain in the calling thread.

    Terminal messages from plain feeds are buffered until the next barrier so
    the event sequence is bit-identical to the threaded schedule, where frame
    outcomes also surface at the following watermark.
    """

    def __init__(self, stages):
        self.stages = stages
        self._buffer: list = []

    def _pump(self, msg) -> list:
        batch = [msg]
        for stage in self.stages:
            nxt = []
            for m in batch:
                nxt.extend(stage.process(m))
            batch = nxt
        return batch

    def feed(self, msg) -> None:
        self._buffer.extend(self._pump(msg))

    def barrier(self, msg) -> list:
        out = self._buffer + self._pump(msg)
        self._buffer = []
        return out

    def close(self):
        pass


class _ThreadedDriver:
    """One thread per stage, FIFO queues in between.

    Frames flow freely; _Tick and _End act as watermarks the loop blocks on,
    so the stored result is step-for-step identical to the inline schedule.
    """

    def __init__(self, stages):
        self.queues = [queue.Queue() for _ in stages]
        self.out = queue.Queue()
        self.threads = []
        for i, stage in enumerate(stages):
            sink = self.queues[i + 1] if i + 1 < len(stages) else self.out
            t = threading.Thread(target=self._worker, args=(stages[i], self.queues[i], sink),
                                 daemon=True)
            t.start()
            self.threads.append(t)

    @staticmethod
    def _worker(stage, source: queue.Queue, sink: queue.Queue):
        while True:
            msg = source.get()
            if msg is None:
                sink.put(None)
                return
            for out in stage.process(msg):
                sink.put(out)

    def feed(self, msg) -> None:
        self.queues[0].put(msg)

    def barrier(self, msg) -> list:
        """Send a watermark and collect every terminal message up to it."""
        self.queues[0].put(msg)
        collected = []
        marker = type(msg)
        while True:
            out = self.out.get()
            collected.append(out)
            if isinstance(out, marker):
                return collected

    def close(self):
        self.queues[0].put(None)
        for t in self.threads:
            t.join(timeout=10.0)


# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    events: list[dict]
    store: TelemetryStore
    metrics: RunMetrics
    final_drone: DroneState | None
    seed: int


def _incident_dbm(harvest, drone_pos: GeoPoint, tag) -> float:
    dist = max(slant_range_m(drone_pos, tag.config.pos), MIN_PATH_DISTANCE_M)
    return received_power_dbm(harvest, dist) + tag.rx_gain_offset_db


def run(mission: MissionParams,
        scenario: ScenarioConfig,
        raster: ElevationRaster,
        *,
        seed: int | None = None,
        dt_s: float = DT_S,
        pipeline_mode: str = "inline",
        store_path=None,
        bridge_id: str = "bridge01",
        gateway_id: str = "gw01",
        latency_s: float = DEFAULT_UPLINK_LATENCY_S,
        expiry_window_s: float = DEFAULT_EXPIRY_WINDOW_S,
        publisher=None,
        start: GeoPoint | None = None) -> RunResult:
    """Execute one scenario against one mission and elevation raster.

    Raises PreflightFailed if the mission does not validate (stand-mode
    scenarios skip flight and hold position, so they skip preflight too).
    """
    if pipeline_mode not in ("inline", "threaded"):
        raise ConfigError(f"pipeline_mode {pipeline_mode!r} unknown")
    run_seed = scenario.seed if seed is None else seed
    rngs = RngStreams(run_seed)

    metrics = RunMetrics()
    store = TelemetryStore(path=store_path)
    keystore = Keystore({t.config.tag_id: t.config.key for t in scenario.tags})
    stages = [
        _BridgeStage(bridge_id, metrics),
        _RelayStage(scenario.uplink, latency_s, dt_s, rngs.stream("relay"), metrics),
        _DecryptStage(keystore, expiry_window_s, gateway_id, metrics, publisher),
        _IngestStage(store, metrics),
    ]
    driver = _ThreadedDriver(stages) if pipeline_mode == "threaded" else _InlineDriver(stages)

    stand_mode = scenario.armed_override is not None
    if stand_mode:
        wp = mission.waypoints[0]
        armed = bool(scenario.armed_override)
        drone = DroneState(pos=GeoPoint(wp.lat, wp.lon, wp.alt_agl_m), soc=1.0,
                           armed=armed, motors_active=armed,
                           state=FlightState.PREFLIGHT)
    else:
        violations = preflight_check(mission, raster)
        if violations:
            raise PreflightFailed(violations)
        drone = initial_drone_state(mission, start)

    tag_states = {t.config.tag_id: TagState() for t in scenario.tags}
    seen_nonces: set[tuple[int, bytes]] = set()
    events: list[dict] = []
    interference = scenario.interference
    phone_dist_m = scenario.phone_distance_m()
    taglink_rng = rngs.stream("taglink")
    tag_rngs = {t.config.tag_id: rngs.stream(f"tag:{t.config.tag_id}") for t in scenario.tags}

    n_steps = int(round(scenario.duration_s / dt_s))
    for step in range(n_steps + 1):
        t = round(step * dt_s, 6)

        # 1. deliveries due by now (and any frame outcomes from the last step)
        for msg in driver.barrier(_Tick(step)):
            events.extend(msg.events)

        # 2. flight state machine
        if not stand_mode:
            in_range = {
                tag.config.tag_id
                for tag in scenario.tags
                if _incident_dbm(scenario.drone_radios, drone.pos, tag)
                >= scenario.drone_radios.sensitivity_dbm
            }
            temp_counts = store.temp_counts()
            collected = {tag_id: temp_counts.get(tag_id, 0) for tag_id in sorted(in_range)}
            drone, transitions = fsm_step(drone, mission, FsmInputs(collected, dt_s))
            for tr in transitions:
                events.append(event(
                    t, "state_transition",
                    **{"from": tr.from_state.value, "to": tr.to_state.value},
                    reason=tr.reason, lat=drone.pos.lat, lon=drone.pos.lon,
                    alt_agl_m=round(drone.pos.alt_agl_m, 6), soc=round(drone.soc, 9),
                    waypoint_index=drone.waypoint_index))

        # 3. tags harvest and advertise
        motor_source = InterferenceSource(
            pos=drone.pos, active=interference.enabled and drone.motors_active,
            power_dbm_at_ref=interference.power_dbm_at_ref,
            ref_m=interference.ref_m, decay_exp=interference.decay_exp)
        gateway_noise = (motor_noise_at_offset_dbm(motor_source, phone_dist_m)
                         if interference.target == "gateway" else NO_NOISE_DBM)
        taglink_noise = (motor_noise_at_offset_dbm(motor_source, 0.0)
                         if interference.target == "tag_link" else NO_NOISE_DBM)

        ambient_c = scenario.ambient.at(t)
        for tag in scenario.tags:
            cfg = tag.config
            incident = _incident_dbm(scenario.drone_radios, drone.pos, tag)
            tag_states[cfg.tag_id], packets = step_tag(
                cfg, tag_states[cfg.tag_id], incident, ambient_c, t, dt_s,
                tag_rngs[cfg.tag_id], scenario.drone_radios.sensitivity_dbm)
            for packet in packets:
                if (cfg.tag_id, packet.nonce) in seen_nonces:
                    raise NonceReuse(f"tag {cfg.tag_id:#010x} reused nonce {packet.nonce.hex()}")
                seen_nonces.add((cfg.tag_id, packet.nonce))
                metrics.packet_tx += 1
                events.append(event(t, "packet_tx", tag_id=cfg.tag_id,
                                    seq=_seq_of(packet), type=_type_of(packet),
                                    nonce=packet.nonce.hex()))
                dist = max(slant_range_m(drone.pos, cfg.pos), MIN_PATH_DISTANCE_M)
                rssi = received_power_dbm(scenario.tag_link, dist) + tag.rx_gain_offset_db
                if rssi < scenario.tag_link.sensitivity_dbm:
                    metrics.lost_uplink += 1
                    continue
                if taglink_noise != NO_NOISE_DBM:
                    snr = rssi - max(scenario.tag_link.noise_floor_dbm, taglink_noise)
                    if taglink_rng.random() >= delivery_probability(snr):
                        metrics.lost_uplink += 1
                        continue
                driver.feed(_Frame(packet, rssi, t, gateway_noise))

        if not stand_mode and drone.state in (FlightState.DONE, FlightState.ABORT):
            break

    for msg in driver.barrier(_End()):
        events.extend(msg.events)
    driver.close()
    store.close()

    return RunResult(events=events, store=store, metrics=metrics,
                     final_drone=None if stand_mode else drone, seed=run_seed)


@dataclass
class ReplaySummary:
    event_counts: dict[str, int]
    duration_s: float
    divergences: list[str]

    @property
    def clean(self) -> bool:
        return not self.divergences


def replay(events: list[dict], speed: float = 0.0, emit=None) -> ReplaySummary:
    """Re-walk a run log, verifying the stored records against the publishes.

    The store half of the log must be exactly what replaying the publish
    stream through the dedup rule would produce; anything else (a deleted
    publish, a forged store line) is reported as a divergence. speed > 0
    paces the walk at simulated-time/speed and hands each event to `emit`.
    """
    import time as _time

    counts: dict[str, int] = {}
    expected: list[tuple[tuple[int, int, str], bool]] = []
    actual: list[tuple[tuple[int, int, str], bool]] = []
    seen_keys: set[tuple[int, int, str]] = set()
    prev_t = None
    try:
        for ev in events:
            counts[ev["kind"]] = counts.get(ev["kind"], 0) + 1
            if speed > 0:
                if prev_t is not None and ev["t_s"] > prev_t:
                    _time.sleep((ev["t_s"] - prev_t) / speed)
                prev_t = ev["t_s"]
                if emit is not None:
                    emit(ev)
            if ev["kind"] == "publish":
                key = (ev["tag_id"], ev["seq"], ev["type"])
                inserted = key not in seen_keys
                seen_keys.add(key)
                expected.append((key, inserted))
            elif ev["kind"] == "store":
                actual.append(((ev["tag_id"], ev["seq"], ev["type"]), ev["inserted"]))
    except KeyError as exc:
        raise CorruptLog(f"event missing field {exc}") from None

    divergences = []
    if len(expected) != len(actual):
        divergences.append(f"publish count {len(expected)} != store count {len(actual)}")
    for i, (exp, act) in enumerate(zip(expected, actual)):
        if exp != act:
            divergences.append(f"store #{i}: expected {exp}, logged {act}")

    duration = events[-1]["t_s"] if events else 0.0
    return ReplaySummary(event_counts=counts, duration_s=duration, divergences=divergences)
