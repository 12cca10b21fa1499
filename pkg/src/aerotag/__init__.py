"""aerotag: deterministic simulator for drone-energized RF-harvesting sensor
tags and the encrypted telemetry pipeline that collects their data."""

__version__ = "0.1.0"

from .engine import ReplaySummary, RunResult, replay, run
from .geo import BoundaryPolygon, ElevationRaster, GeoPoint
from .mission import DroneState, FlightState, MissionParams, load_mission, preflight_check
from .pipeline import Keystore, PublishedMessage, RunMetrics
from .scenario import ScenarioConfig, load_scenario
from .store import TelemetryRecord, TelemetryStore
from .tag import EncryptedPacket, TagConfig, TagPacket, TagState

__all__ = [
    "BoundaryPolygon", "DroneState", "ElevationRaster", "EncryptedPacket",
    "FlightState", "GeoPoint", "Keystore", "MissionParams", "PublishedMessage",
    "ReplaySummary", "RunMetrics", "RunResult", "ScenarioConfig", "TagConfig",
    "TagPacket", "TagState", "TelemetryRecord", "TelemetryStore",
    "load_mission", "load_scenario", "preflight_check", "replay", "run",
]
