"""Small input-validation helpers used across modules."""

from __future__ import annotations

import math

from .errors import ConfigError


def check_unit_open(name: str, value: float) -> float:
    """Require value in the open interval (0, 1)."""
    if not (0.0 < value < 1.0):
        raise ConfigError(f"{name} must be in (0, 1), got {value}")
    return value


def check_positive_int(name: str, value: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return value


def check_finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite, got {value}")
    return value


def is_number(value) -> bool:
    """True for int/float but not bool (JSON booleans are not measurements)."""
    return isinstance(value, (int, float)) and not isinstance(value, bool)
