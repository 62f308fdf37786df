"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario configuration failed validation."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class RegionPreconditionError(ValueError):
    """A spacetime region does not meet the preconditions of an operation."""


class DegenerateNormError(ValueError):
    """A physical norm or normalization constant is numerically zero."""
