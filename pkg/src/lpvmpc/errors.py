"""Exception types raised by the library."""


class LpvMpcError(Exception):
    """Base class for all library errors."""


class DomainError(LpvMpcError, ValueError):
    """A state lies outside the region where the vehicle model is defined."""


class DegenerateWaypoint(LpvMpcError, ValueError):
    pass


class EmptyTrajectory(LpvMpcError, ValueError):
    pass


class DegenerateGeometry(LpvMpcError, ValueError):
    pass


class ProjectionFailure(LpvMpcError, ValueError):
    pass


class DimensionMismatch(LpvMpcError, ValueError):
    pass


class ConfigError(LpvMpcError, ValueError):
    """Invalid scenario configuration; carries the offending key path and line."""

    def __init__(self, message, key_path=None, line=None):
        self.key_path = key_path
        self.line = line
        where = ""
        if key_path:
            where += f" at '{key_path}'"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{message}{where}")
