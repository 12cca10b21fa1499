"""Shared fixtures: the canonical flat world with three tags on a box.

Mission, DEM, and scenario texts come from the scenario library shipped in
scenarios/ so the tests exercise the same files the CLI quickstart uses.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from aerotag.geo import load_raster
from aerotag.mission import load_mission
from aerotag.scenario import load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"

BOX_LAT = 35.7275
BOX_LON = -78.6962

FLAT_DEM = (SCENARIO_DIR / "dem_flat.asc").read_text()
BOX_MISSION = (SCENARIO_DIR / "mission_box.yaml").read_text()
CLEAN_FLIGHT_SCENARIO = (SCENARIO_DIR / "flight_clean.yaml").read_text()

TAG_YAML = """\
tags:
  - {tag_id: 1, key_hex: "000102030405060708090a0b0c0d0e0f", lat: 35.7275, lon: -78.6962}
  - {tag_id: 2, key_hex: "101112131415161718191a1b1c1d1e1f", lat: 35.727504, lon: -78.696194}
  - {tag_id: 3, key_hex: "202122232425262728292a2b2c2d2e2f", lat: 35.727496, lon: -78.696206}
"""


def stand_scenario(armed: bool, phone_mode: str, seed: int, duration_s: float = 180.0,
                   table_dist_m: float = 3.0) -> str:
    return TAG_YAML + f"""\
ambient_c: 24.0
interference: {{enabled: true}}
phone_mode: {phone_mode}
table_dist_m: {table_dist_m}
armed_override: {'true' if armed else 'false'}
duration_s: {duration_s}
seed: {seed}
"""


def scenario_file(name: str) -> Path:
    return SCENARIO_DIR / name


@pytest.fixture
def flat_raster():
    return load_raster(FLAT_DEM)


@pytest.fixture
def box_mission():
    return load_mission(BOX_MISSION)


@pytest.fixture
def clean_flight():
    return load_scenario(CLEAN_FLIGHT_SCENARIO)
