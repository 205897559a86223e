"""Exception hierarchy shared by the simulation packages and the CLI."""

from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the package"""

    exit_code = 3


class ConfigError(SimulationError):
    """Scenario file could not be parsed or validated"""

    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.path = path
        self.line = line
        super().__init__(self.__str__())

    def __str__(self) -> str:
        if self.path and self.line:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path:
            return f"{self.path}: {self.message}"
        return self.message


class Unsupported(SimulationError):
    """Operation requested for a manifold that does not support it"""

    exit_code = 2


# geometry

class GeometryError(SimulationError):
    pass


class DegenerateRetraction(GeometryError):
    pass


class RangeExceeded(GeometryError):
    pass


class NotOnManifold(GeometryError):
    pass


# fields

class FieldError(SimulationError):
    pass


class UnsupportedCorner(FieldError):
    pass


class DegenerateClassification(FieldError):
    pass


class NotSliding(FieldError):
    pass


class OffSurface(FieldError):
    """Classification requested away from the switching set"""


class NotWellDefinedOrder(FieldError):
    pass


# controllers

class ControllerError(SimulationError):
    pass


class NotSkew(ControllerError):
    pass


class OnSwitchingManifold(ControllerError):
    pass


class InvalidGains(ControllerError):
    exit_code = 2


# integrator

class BudgetExceeded(SimulationError):
    """Step budget exhausted; `trajectory` holds the samples computed so far"""

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
