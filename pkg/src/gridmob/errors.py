"""Exception types shared across the package."""


class GridMobError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GridMobError, ValueError):
    """An argument violates a documented precondition."""


class BuildingConflictError(GridMobError):
    """A building would overlap an existing building or reuse its id."""


class NoPathError(GridMobError):
    """No street path exists between the requested blocks."""


class MissingTrajectoryError(GridMobError):
    """An operation requires a trajectory that has not been generated."""
