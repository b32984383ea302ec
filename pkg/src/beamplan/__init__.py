"""Trajectory-aware beam-search planning for mmWave links."""

from .errors import (
    BeamPlanError,
    CapacityError,
    ConditioningError,
    InvalidArgumentError,
    ModelMismatchError,
    SchemaError,
)

__version__ = "0.1.0"
