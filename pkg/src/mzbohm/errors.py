"""Exception types raised by the simulation contracts."""


class SimulationError(Exception):
    """Base class for all mzbohm errors."""


class NodeProximityError(SimulationError):
    """Field amplitude below the node threshold; phase/velocity undefined there."""

    def __init__(self, msg, x=None, density=None, threshold=None):
        super().__init__(msg)
        self.x = x
        self.density = density
        self.threshold = threshold


class AlignmentError(SimulationError):
    """A packet center is not on an optical-event plane at the event time."""


class BranchOverlapError(SimulationError):
    """Which-way tag requested while the arm branches still overlap."""


class DoubleTagError(SimulationError):
    """Which-way tag applied to a field that already carries labels."""


class GeometryError(SimulationError):
    """Inconsistent interferometer geometry (unreachable mirror, bad leg time)."""


class TimelineGapError(SimulationError):
    """Requested time not covered by the field timeline."""


class SamplerEfficiencyError(SimulationError):
    """Rejection-sampler acceptance rate collapsed; envelope misconfigured."""


class SupportOverflowError(SimulationError):
    """Analytic field has non-negligible density at the grid boundary."""


class BoundaryContaminationError(SimulationError):
    """Grid density near the periodic boundary exceeds the wrap-around guard."""


class FieldPreconditionError(SimulationError):
    """An operation was called outside its stated domain."""


class FlowCrossingError(SimulationError):
    """Two same-branch trajectories intersected at equal times (flow violation)."""


class ConfigError(SimulationError):
    """Scenario configuration file is invalid."""
