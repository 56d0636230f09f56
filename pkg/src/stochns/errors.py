"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or inconsistent configuration."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class UnsupportedModelError(TypeError):
    """Operation not defined for the given noise model."""


class DivergenceError(FloatingPointError):
    """Non-finite state encountered during time stepping."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class StatisticsRefused(RuntimeError):
    """Too few samples or replicas for the requested statistic."""
