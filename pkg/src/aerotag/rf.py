"""Free-space link budget and the motor-interference model.

Everything here is a pure function of its arguments. The harvest downlink
(918 MHz) and the advertisement uplink (2.44 GHz) share the same Friis
path-loss core; the interference source models broadband motor noise with
a power-law falloff from a reference distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import BelowMinDistance, InvariantViolation
from .geo import GeoPoint, slant_range_m

SPEED_OF_LIGHT_M_S = 299_792_458.0

# Below this separation the far-field model is meaningless; callers clamp,
# fspl_db itself refuses.
MIN_PATH_DISTANCE_M = 0.1

NO_NOISE_DBM = float("-inf")

LOGISTIC_K_PER_DB = 1.0
LOGISTIC_SNR50_DB = 3.0


@dataclass(frozen=True)
class RadioParams:
    """One directional link: emitter EIRP, receiver gain, and thresholds.

    sensitivity_dbm is the minimum usable received power; noise_floor_dbm is
    the receiver's thermal-plus-NF noise level.
    """

    eirp_dbm: float
    rx_gain_dbi: float
    freq_hz: float
    sensitivity_dbm: float
    noise_floor_dbm: float

    def __post_init__(self):
        if self.freq_hz <= 0:
            raise InvariantViolation(f"freq_hz {self.freq_hz} must be positive")
        if self.sensitivity_dbm <= -200.0:
            raise InvariantViolation(f"sensitivity_dbm {self.sensitivity_dbm} below -200")


@dataclass(frozen=True)
class InterferenceSource:
    """Broadband noise tied to the drone body, active while motors spin."""

    pos: GeoPoint
    active: bool
    power_dbm_at_ref: float
    ref_m: float
    decay_exp: float

    def __post_init__(self):
        if self.ref_m <= 0:
            raise InvariantViolation(f"ref_m {self.ref_m} must be positive")
        if self.decay_exp < 2.0:
            raise InvariantViolation(f"decay_exp {self.decay_exp} below free-space minimum 2")


def fspl_db(freq_hz: float, dist_m: float) -> float:
    """Free-space path loss, 20*log10(4*pi*d*f/c) dB."""
    if freq_hz <= 0:
        raise InvariantViolation(f"freq_hz {freq_hz} must be positive")
    if dist_m < MIN_PATH_DISTANCE_M:
        raise BelowMinDistance(f"dist {dist_m} m below minimum {MIN_PATH_DISTANCE_M} m")
    return 20.0 * math.log10(4.0 * math.pi * dist_m * freq_hz / SPEED_OF_LIGHT_M_S)


def received_power_dbm(p: RadioParams, dist_m: float) -> float:
    """EIRP plus receive gain minus free-space loss at the link frequency."""
    return p.eirp_dbm + p.rx_gain_dbi - fspl_db(p.freq_hz, dist_m)


def harvested_power_w(rx_dbm: float, efficiency: float, sensitivity_dbm: float) -> float:
    """RF-to-DC conversion: zero below the harvester threshold, linear above."""
    if rx_dbm < sensitivity_dbm:
        return 0.0
    return efficiency * 10.0 ** ((rx_dbm - 30.0) / 10.0)


def motor_noise_dbm(s: InterferenceSource, rx_pos: GeoPoint) -> float:
    """Noise power coupled at rx_pos; -inf while the motors are stopped.

    Distances inside ref_m clamp to ref_m, so the reference power is the
    ceiling regardless of how close the receiver is mounted.
    """
    if not s.active:
        return NO_NOISE_DBM
    d = max(slant_range_m(s.pos, rx_pos), s.ref_m)
    return s.power_dbm_at_ref - 10.0 * s.decay_exp * math.log10(d / s.ref_m)


def motor_noise_at_offset_dbm(s: InterferenceSource, offset_m: float) -> float:
    """Same falloff for a receiver rigidly mounted offset_m from the source."""
    if not s.active:
        return NO_NOISE_DBM
    d = max(offset_m, s.ref_m)
    return s.power_dbm_at_ref - 10.0 * s.decay_exp * math.log10(d / s.ref_m)


def delivery_probability(snr_db: float,
                         k_per_db: float = LOGISTIC_K_PER_DB,
                         snr50_db: float = LOGISTIC_SNR50_DB) -> float:
    """Logistic packet-delivery curve; 0.5 at snr50, monotone in SNR."""
    x = -k_per_db * (snr_db - snr50_db)
    if x > 700.0:  # exp overflow guard; probability is 0 to double precision
        return 0.0
    return 1.0 / (1.0 + math.exp(x))


def harvest_activation_range_m(p: RadioParams) -> float:
    """Largest distance at which the received power still meets sensitivity.

    Closed-form Friis inversion; the binary-search cross-check lives in the
    test suite.
    """
    exponent = (p.eirp_dbm + p.rx_gain_dbi - p.sensitivity_dbm
                - 20.0 * math.log10(4.0 * math.pi * p.freq_hz / SPEED_OF_LIGHT_M_S)) / 20.0
    return 10.0 ** exponent
