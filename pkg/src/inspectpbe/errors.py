"""Exception hierarchy shared by the solver modules."""


class InspectionGameError(Exception):
    """Base class for all errors raised by inspectpbe."""


class LUnstable(InspectionGameError):
    """Server L is unstable at a query point of the cost-gap function."""


class TargetAboveMax(InspectionGameError):
    """Inverse cost-gap target exceeds the gap at zero misbehavior."""


class TargetBelowMin(InspectionGameError):
    """Inverse cost-gap target lies below the gap attained at full misbehavior."""


class NotMonotone(InspectionGameError):
    """The cost-gap function is not strictly decreasing on the sampled domain."""


class AssumptionViolation(InspectionGameError):
    """The cost model fails one of the congestion assumptions (A1)-(A3)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BoundaryParameters(InspectionGameError):
    """Game parameters lie on a regime boundary where the PBE may be non-unique."""

    def __init__(self, message, regime=None):
        super().__init__(message)
        self.regime = regime


class InternalConsistencyError(InspectionGameError):
    """A closed-form result failed its own post-condition."""


class UnstableQueue(InspectionGameError, ValueError):
    """Arrival rate is at or above the service rate."""
