"""
Simulator error hierarchy.
Every error carries a human-readable detail and the CLI exit code it maps to.
"""


class SimulationError(Exception):
    """Base error for all simulator failures."""

    exit_code: int = 1

    def __init__(self, detail: str, exit_code: int | None = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


class ConfigurationError(SimulationError):
    """Run configuration failed validation."""

    exit_code = 2


class ConfigNotFoundError(ConfigurationError):
    """Run configuration file does not exist."""


class ArtifactNotFoundError(SimulationError):
    """A persisted artifact (scenario, checkpoint, run directory) is missing."""

    exit_code = 2


class ArtifactFormatError(SimulationError):
    """A persisted artifact is truncated or corrupt."""


class SchemaVersionError(ArtifactFormatError):
    """A persisted artifact carries an unsupported schema version."""


class RangeError(SimulationError, ValueError):
    """A scalar argument is outside its admissible range."""


class ShapeMismatchError(SimulationError, ValueError):
    """Array shapes do not agree."""


class SpecMismatchError(SimulationError, ValueError):
    """BEV grids built on different BEV specifications were combined."""


class EmptySelectionError(SimulationError, ValueError):
    """No UAV is selected where at least one is required."""


class LinkError(SimulationError, ArithmeticError):
    """Link computations received non-finite inputs."""


class ScheduleError(SimulationError, ValueError):
    """Diffusion schedule is invalid or a step index is out of range."""


class EmptyDatasetError(SimulationError, ValueError):
    """Training was requested without any samples."""


class ConstraintViolationError(SimulationError, ValueError):
    """A joint action violates one of the optimization constraints."""

    def __init__(self, constraint: str, detail: str):
        super().__init__(f"{constraint}: {detail}")
        self.constraint = constraint
