"""
Planner Errors
Exception hierarchy shared by the geometry, solver, agent and harness layers
"""

from typing import Any, Optional


class RawPlannerError(Exception):
    """Base class for every error raised by the planner workbench"""


class NotPositiveDefiniteError(RawPlannerError, ValueError):
    """Ellipsoid shape matrix is not positive definite"""


class LevelSetUndefinedError(RawPlannerError, ValueError):
    """r > -1, so the -1 level set of the ellipsoid is empty"""


class StartInfeasibleError(RawPlannerError, ValueError):
    """A sensed obstacle point lies strictly inside the robot footprint"""


class ContainmentError(RawPlannerError, ValueError):
    """The start footprint is not inside the ellipsoid it must stay in"""


class NoFeasibleWaypointError(RawPlannerError):
    """Every waypoint candidate was filtered out, or no separating ellipsoid exists"""


class SolverFailureError(RawPlannerError):
    """The SDP did not return an optimal certificate"""

    def __init__(self, message: str, status: Optional[str] = None):
        super().__init__(message)
        self.status = status


class SafetyViolationError(RawPlannerError):
    """A runtime safety check failed"""

    def __init__(self, message: str, check: Optional[str] = None, record: Optional[Any] = None):
        super().__init__(message)
        self.check = check
        self.record = record


class DimensionMismatchError(RawPlannerError, ValueError):
    """Weights and features disagree on dimension"""


class EnvironmentFileError(RawPlannerError, ValueError):
    """Environment file could not be parsed or failed validation"""

    def __init__(self, path: str, message: str, location: Optional[str] = None):
        where = f"{path}:{location}" if location else str(path)
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.location = location


class TraceFormatError(RawPlannerError, ValueError):
    """Trace file is corrupt or incomplete"""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class UntrainedWeightsError(RawPlannerError):
    """Acceptance runs were given weights that did not come out of training"""
