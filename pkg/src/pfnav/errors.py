"""Shared exception types."""


class PfnavError(Exception):
    """Base class for errors raised by this package."""


class IntegrationError(PfnavError):
    """Non-finite values encountered while integrating a vector field."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class SnapshotError(PfnavError):
    """Snapshot generation produced no usable pairs."""


class ProjectionError(PfnavError):
    """Least-squares projection onto the basis failed."""


class SolverError(PfnavError):
    """An iterative solver failed to produce a usable answer."""


class SchemaError(PfnavError):
    """Configuration violates the schema. Carries a field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
