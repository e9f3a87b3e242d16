"""Exception hierarchy shared by all rydkit modules."""

from __future__ import annotations


class RydkitError(Exception):
    """Base class for every error raised by the package."""


class CapacityError(RydkitError):
    """Requested Hilbert space exceeds the configured memory cap."""


class ConvergenceError(RydkitError):
    """A numerical routine failed to reach its tolerance.

    ``residual`` carries the best error estimate that was achieved.
    """

    def __init__(self, message: str, residual: float = float("nan"), index: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class DegenerateStateError(RydkitError):
    """State has zero norm where a normalized quantity was requested."""


class SingularInteractionError(RydkitError):
    """Two atoms coincide, so the 1/r^6 interaction diverges."""


class InvalidModelError(RydkitError):
    """Model parameters are outside their physical domain."""


class UndefinedDisplacementError(RydkitError):
    """No atom pair realizes the requested lattice displacement."""


class PartialBoundError(RydkitError):
    """Populations needed by the coherence bound are missing."""

    def __init__(self, message: str, missing: list[str]):
        super().__init__(message)
        self.missing = missing


class ConditioningError(RydkitError):
    """Measurement matrix is numerically singular."""


class IntegrationError(RydkitError):
    """Quadrature did not converge to the requested accuracy."""


class ConfigError(RydkitError):
    """Invalid or incomplete run configuration; ``key`` names the offending entry."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
