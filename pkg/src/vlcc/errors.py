"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input violates an operation's precondition."""


class ResourceBudgetError(RuntimeError):
    """An exact enumeration or build would exceed its configured budget."""


class SamplingError(RuntimeError):
    """Rejection sampling exhausted its attempt budget."""


class NumericError(RuntimeError):
    """An iterative numeric routine failed to converge."""


class ConfigError(ValueError):
    """Malformed or insufficient experiment configuration."""
