"""Exception types shared across the package."""


class SdlabError(Exception):
    """Base class for package errors."""


class ConfigError(SdlabError):
    """Invalid geometry or run configuration."""


class TangencyError(SdlabError):
    """Trajectory met the boundary tangentially (within tolerance)."""


class CornerError(SdlabError):
    """Trajectory hit a junction between boundary pieces (within tolerance)."""


class IterationCapError(SdlabError):
    """A flight or return-time loop exceeded its iteration cap."""
