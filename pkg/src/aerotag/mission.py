"""Autonomous flight plan as an explicit state machine.

The drone takes off to a cruise altitude, flies to each waypoint, descends
to the waypoint's target altitude, lingers until enough telemetry has been
collected (or a linger timeout / battery floor forces the issue), then climbs
out to the next waypoint or lands. `fsm_step` is a pure function: the same
(state, params, inputs) always produces the same successor, which is what
makes whole runs replayable.

Fig-3-style node set reconstructed from the mission prose: PREFLIGHT,
TAKEOFF, CRUISE, DESCEND, LINGER, CLIMB, LAND, DONE, ABORT.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import yaml

from .errors import InvalidDt, InvariantViolation, NoData, OutOfBounds, ParseError
from .geo import (
    BoundaryPolygon,
    ElevationRaster,
    GeoPoint,
    ground_height_at,
    haversine_m,
    point_in_polygon,
)


class FlightState(enum.Enum):
    PREFLIGHT = "PREFLIGHT"
    TAKEOFF = "TAKEOFF"
    CRUISE = "CRUISE"
    DESCEND = "DESCEND"
    LINGER = "LINGER"
    CLIMB = "CLIMB"
    LAND = "LAND"
    DONE = "DONE"
    ABORT = "ABORT"


AIRBORNE_STATES = frozenset({
    FlightState.TAKEOFF, FlightState.CRUISE, FlightState.DESCEND,
    FlightState.LINGER, FlightState.CLIMB, FlightState.LAND,
})

# Flight phases where the commanded altitude must respect the safety margin;
# TAKEOFF and LAND legitimately pass through the ground band.
MARGIN_STATES = frozenset({
    FlightState.CRUISE, FlightState.DESCEND, FlightState.LINGER, FlightState.CLIMB,
})


@dataclass(frozen=True)
class MissionParams:
    waypoints: tuple[GeoPoint, ...]
    cruise_alt_agl_m: float
    max_linger_s: float
    battery_land_soc: float
    safety_margin_m: float
    boundary: BoundaryPolygon
    sufficient_packets_per_tag: int = 1

    def __post_init__(self):
        if not self.waypoints:
            raise InvariantViolation("mission needs at least one waypoint")
        for i, wp in enumerate(self.waypoints):
            if wp.alt_agl_m is None:
                raise InvariantViolation(f"waypoint {i} missing target altitude")
            if wp.alt_agl_m >= self.cruise_alt_agl_m:
                raise InvariantViolation(
                    f"cruise altitude {self.cruise_alt_agl_m} m not above waypoint {i} "
                    f"target {wp.alt_agl_m} m"
                )
        if self.max_linger_s <= 0:
            raise InvariantViolation("max_linger_s must be positive")
        if not 0.0 < self.battery_land_soc < 1.0:
            raise InvariantViolation("battery_land_soc outside (0, 1)")
        if self.sufficient_packets_per_tag < 1:
            raise InvariantViolation("sufficient_packets_per_tag must be >= 1")


@dataclass(frozen=True)
class DroneState:
    pos: GeoPoint
    soc: float
    armed: bool
    motors_active: bool
    state: FlightState
    waypoint_index: int = 0
    linger_elapsed_s: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise InvariantViolation(f"soc {self.soc} outside [0, 1]")
        if self.motors_active and not self.armed:
            raise InvariantViolation("motors active while disarmed")


@dataclass(frozen=True)
class Kinematics:
    """Point-mass speed limits; plausible small-multirotor defaults."""

    v_horizontal_mps: float = 5.0
    v_vertical_mps: float = 2.0
    arrival_tolerance_m: float = 0.5


DEFAULT_KINEMATICS = Kinematics()

# Drain per second of each flight phase. Placeholder magnitudes; only the
# land-on-low-soc threshold logic is behaviourally meaningful.
DEFAULT_BATTERY_RATES = {
    "ground": 0.0001,
    "hover": 0.001,
    "translate": 0.0012,
    "climb": 0.0015,
}

_PHASE_BY_STATE = {
    FlightState.PREFLIGHT: "ground",
    FlightState.TAKEOFF: "climb",
    FlightState.CRUISE: "translate",
    FlightState.DESCEND: "hover",
    FlightState.LINGER: "hover",
    FlightState.CLIMB: "climb",
    FlightState.LAND: "hover",
    FlightState.DONE: "ground",
    FlightState.ABORT: "ground",
}


@dataclass(frozen=True)
class Violation:
    kind: str  # OutsideBoundary | GroundClearance | RasterCoverage
    waypoint_index: int
    detail: str

    def __str__(self):
        return f"waypoint {self.waypoint_index}: {self.kind} ({self.detail})"


@dataclass(frozen=True)
class Transition:
    from_state: FlightState
    to_state: FlightState
    reason: str


@dataclass(frozen=True)
class FsmInputs:
    """Per-step sensor view handed to the state machine.

    collected_temp_counts maps every tag currently in harvesting range to the
    number of its temperature packets already stored downstream.
    """

    collected_temp_counts: Mapping[int, int] = field(default_factory=dict)
    dt_s: float = 0.1
    preflight_violations: tuple[Violation, ...] = ()


def _require(mapping: Mapping, key: str, kind, where: str):
    if not isinstance(mapping, Mapping):
        raise ParseError(f"{where}: expected a mapping")
    if key not in mapping:
        raise ParseError(f"{where}: missing key '{key}'")
    value = mapping[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ParseError(f"{where}: key '{key}' must be {kind.__name__}")
    return value


def load_mission(text: str) -> MissionParams:
    """Parse and validate a mission YAML file.

    Structural problems raise ParseError; a well-formed file whose values
    break a mission invariant raises InvariantViolation.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ParseError("mission file must be a mapping")

    mission = _require(doc, "mission", Mapping, "top level")
    boundary_doc = _require(doc, "boundary", Sequence, "top level")

    wp_docs = _require(mission, "waypoints", Sequence, "mission")
    if isinstance(wp_docs, (str, bytes)) or not wp_docs:
        raise ParseError("mission: waypoints must be a non-empty list")
    waypoints = tuple(
        GeoPoint(
            lat=_require(wp, "lat", float, f"waypoint {i}"),
            lon=_require(wp, "lon", float, f"waypoint {i}"),
            alt_agl_m=_require(wp, "alt_m_agl", float, f"waypoint {i}"),
        )
        for i, wp in enumerate(wp_docs)
    )

    if isinstance(boundary_doc, (str, bytes)) or len(boundary_doc) < 3:
        raise ParseError("boundary must list at least 3 vertices")
    boundary = BoundaryPolygon(tuple(
        GeoPoint(
            lat=_require(v, "lat", float, f"boundary vertex {i}"),
            lon=_require(v, "lon", float, f"boundary vertex {i}"),
        )
        for i, v in enumerate(boundary_doc)
    ))

    return MissionParams(
        waypoints=waypoints,
        cruise_alt_agl_m=_require(mission, "cruise_alt_m_agl", float, "mission"),
        max_linger_s=_require(mission, "target_linger_s_max", float, "mission"),
        battery_land_soc=_require(mission, "battery_land_soc", float, "mission"),
        safety_margin_m=_require(mission, "safety_margin_m", float, "mission"),
        boundary=boundary,
        sufficient_packets_per_tag=_require(mission, "sufficient_packets_per_tag", int, "mission"),
    )


def battery_step(soc: float, phase: str, dt_s: float,
                 rates: Mapping[str, float] = DEFAULT_BATTERY_RATES) -> float:
    """Drain the battery at the phase rate, clamped at empty."""
    if phase not in rates:
        raise InvariantViolation(f"unknown battery phase {phase!r}")
    return max(0.0, soc - rates[phase] * dt_s)


def linger_satisfied(collected: Mapping[int, int], expected_tags, threshold: int) -> bool:
    """True iff every expected tag has at least `threshold` temperature packets."""
    if threshold < 1:
        raise InvariantViolation("threshold must be >= 1")
    return all(collected.get(tag, 0) >= threshold for tag in expected_tags)


def preflight_check(m: MissionParams, r: ElevationRaster) -> list[Violation]:
    """Validate every waypoint against boundary, clearance margin, and raster.

    Runs once before takeoff; the result is held fixed for the flight.
    """
    violations: list[Violation] = []
    for i, wp in enumerate(m.waypoints):
        if not point_in_polygon(m.boundary, wp):
            violations.append(Violation("OutsideBoundary", i, f"({wp.lat}, {wp.lon})"))
        if wp.alt_agl_m < m.safety_margin_m:
            violations.append(Violation(
                "GroundClearance", i,
                f"target {wp.alt_agl_m} m below margin {m.safety_margin_m} m"))
        try:
            ground_height_at(r, wp.lat, wp.lon)
        except (OutOfBounds, NoData) as exc:
            violations.append(Violation("RasterCoverage", i, str(exc)))
    return violations


def initial_drone_state(m: MissionParams, start: GeoPoint | None = None) -> DroneState:
    """Drone on the ground at `start` (first waypoint's ground position by default)."""
    if start is None:
        wp = m.waypoints[0]
        start = GeoPoint(wp.lat, wp.lon, 0.0)
    elif start.alt_agl_m is None:
        start = GeoPoint(start.lat, start.lon, 0.0)
    return DroneState(pos=start, soc=1.0, armed=False, motors_active=False,
                      state=FlightState.PREFLIGHT)


def _move_towards(pos: GeoPoint, target: GeoPoint, step_m: float) -> GeoPoint:
    """Advance horizontally toward target by at most step_m, altitude unchanged."""
    dist = haversine_m(pos, target)
    if dist <= step_m or dist == 0.0:
        return GeoPoint(target.lat, target.lon, pos.alt_agl_m)
    frac = step_m / dist
    return GeoPoint(pos.lat + frac * (target.lat - pos.lat),
                    pos.lon + frac * (target.lon - pos.lon),
                    pos.alt_agl_m)


def _with_alt(pos: GeoPoint, alt: float) -> GeoPoint:
    return GeoPoint(pos.lat, pos.lon, alt)


def fsm_step(d: DroneState,
             m: MissionParams,
             inputs: FsmInputs,
             kin: Kinematics = DEFAULT_KINEMATICS,
             battery_rates: Mapping[str, float] = DEFAULT_BATTERY_RATES,
             ) -> tuple[DroneState, list[Transition]]:
    """Advance the flight state machine by one step of inputs.dt_s seconds."""
    dt = inputs.dt_s
    if dt <= 0:
        raise InvalidDt(f"dt_s {dt} must be positive")
    if d.state in (FlightState.DONE, FlightState.ABORT):
        return d, []  # absorbing

    phase = _PHASE_BY_STATE[d.state]
    trans: list[Transition] = []
    s = d

    def goto(new_state: FlightState, reason: str, **changes) -> DroneState:
        trans.append(Transition(s.state, new_state, reason))
        return replace(s, state=new_state, **changes)

    wp = m.waypoints[min(s.waypoint_index, len(m.waypoints) - 1)]
    last_waypoint = s.waypoint_index >= len(m.waypoints) - 1

    if s.state is FlightState.PREFLIGHT:
        if inputs.preflight_violations:
            s = goto(FlightState.ABORT, "preflight_failed")
        else:
            s = goto(FlightState.TAKEOFF, "preflight_passed", armed=True, motors_active=True)

    elif s.state is FlightState.TAKEOFF:
        alt = min(s.pos.alt_agl_m + kin.v_vertical_mps * dt, m.cruise_alt_agl_m)
        s = replace(s, pos=_with_alt(s.pos, alt))
        if alt >= m.cruise_alt_agl_m:
            s = goto(FlightState.CRUISE, "cruise_altitude_reached")

    elif s.state is FlightState.CRUISE:
        s = replace(s, pos=_move_towards(s.pos, wp, kin.v_horizontal_mps * dt))
        if haversine_m(s.pos, wp) < kin.arrival_tolerance_m:
            s = goto(FlightState.DESCEND, "waypoint_overhead")

    elif s.state is FlightState.DESCEND:
        alt = max(s.pos.alt_agl_m - kin.v_vertical_mps * dt, wp.alt_agl_m)
        s = replace(s, pos=_with_alt(s.pos, alt))
        if alt <= wp.alt_agl_m:
            s = goto(FlightState.LINGER, "target_altitude_reached", linger_elapsed_s=0.0)

    elif s.state is FlightState.LINGER:
        next_state = FlightState.LAND if last_waypoint else FlightState.CLIMB
        if s.soc <= m.battery_land_soc:
            s = goto(FlightState.LAND, "low_battery")
        elif linger_satisfied(inputs.collected_temp_counts,
                              inputs.collected_temp_counts.keys(),
                              m.sufficient_packets_per_tag):
            s = goto(next_state, "linger_satisfied")
        elif s.linger_elapsed_s >= m.max_linger_s:
            s = goto(next_state, "max_linger_elapsed")
        else:
            s = replace(s, linger_elapsed_s=s.linger_elapsed_s + dt)

    elif s.state is FlightState.CLIMB:
        alt = min(s.pos.alt_agl_m + kin.v_vertical_mps * dt, m.cruise_alt_agl_m)
        s = replace(s, pos=_with_alt(s.pos, alt))
        if alt >= m.cruise_alt_agl_m:
            s = goto(FlightState.CRUISE, "next_waypoint",
                     waypoint_index=s.waypoint_index + 1)

    elif s.state is FlightState.LAND:
        alt = max(s.pos.alt_agl_m - kin.v_vertical_mps * dt, 0.0)
        s = replace(s, pos=_with_alt(s.pos, alt))
        if alt == 0.0:
            s = goto(FlightState.DONE, "touchdown", armed=False, motors_active=False)

    s = replace(s, soc=battery_step(s.soc, phase, dt, battery_rates))

    # Geofence guard: unreachable while flying toward in-boundary targets from
    # an in-boundary start, but enforced regardless.
    if s.state in AIRBORNE_STATES and not point_in_polygon(m.boundary, s.pos):
        s = goto(FlightState.ABORT, "boundary_exit")

    return s, trans
