"""Exception hierarchy shared across the simulator, trainer and CLI."""

from __future__ import annotations

from typing import Optional


class GlosaError(Exception):
    """Base class for every error raised by platoon_glosa."""


class ConfigurationError(GlosaError, ValueError):
    """Invalid configuration value, file or flag combination."""


class MapFormatError(ConfigurationError):
    """Malformed efficiency-map CSV, located by row and column."""

    def __init__(self, message: str, *, row: Optional[int] = None, col: Optional[int] = None):
        location = ""
        if row is not None:
            location = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + location)
        self.row = row
        self.col = col


class CollisionStateError(GlosaError, ValueError):
    """A car-following law was evaluated on a non-positive net gap."""


class CheckpointError(GlosaError):
    """Checkpoint missing, unreadable or built for another network layout."""


class NumericDivergenceError(GlosaError, ArithmeticError):
    """Training produced non-finite parameters."""
