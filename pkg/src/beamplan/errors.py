"""Exception types shared across the package."""


class BeamPlanError(Exception):
    """Base class for all errors raised by beamplan."""


class InvalidArgumentError(BeamPlanError, ValueError):
    pass


class CapacityError(BeamPlanError):
    """An enumeration would exceed a configured size cap."""


class ConditioningError(BeamPlanError):
    """Conditioning on an event of probability zero."""


class SchemaError(BeamPlanError, ValueError):
    pass


class ModelMismatchError(BeamPlanError):
    """A realization fell outside the modeled skeleton alphabet."""
