"""Shared exception types."""


class DomainError(ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """A mesh/grid/CLI configuration is inconsistent or out of range."""


class NonConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""
