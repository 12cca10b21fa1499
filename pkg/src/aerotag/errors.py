"""Exception types shared across the aerotag package."""


class AerotagError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(AerotagError):
    """Input text could not be parsed (malformed file, bad header, bad key)."""


class InvariantViolation(AerotagError):
    """A domain type invariant was violated at construction or load time."""


class ConfigError(AerotagError):
    """Scenario configuration is structurally valid YAML but semantically wrong."""


class OutOfBounds(AerotagError):
    """Raster query outside the covered area."""


class NoData(AerotagError):
    """Raster query touching a nodata cell."""


class BelowMinDistance(AerotagError):
    """Path-loss query below the near-field minimum distance."""


class InvalidDt(AerotagError):
    """Simulation step called with a non-positive time increment."""


class NonceReuse(AerotagError):
    """A tag attempted to seal two packets under the same (key, nonce)."""


class AuthFailure(AerotagError):
    """AEAD authentication failed (wrong key, tamper, or truncation)."""


class DecodeError(AerotagError):
    """Authenticated plaintext does not match the packet byte layout."""


class Expired(AerotagError):
    """Frame arrived at the decryption service outside the timeliness window."""


class UnknownTag(AerotagError):
    """No key registered for the tag id carried by a frame."""


class SchemaError(AerotagError):
    """Published message violates the closed telemetry schema."""


class StorageFull(AerotagError):
    """Telemetry store reached its configured record cap."""


class PreflightFailed(AerotagError):
    """Mission rejected by preflight validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"preflight failed: {lines}")


class CorruptLog(AerotagError):
    """Run log file is malformed or internally inconsistent."""
