"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid user-supplied parameters or configuration."""


class NumericalError(ArithmeticError):
    """A numerical procedure could not produce a trustworthy result."""


class RankDeficientError(NumericalError):
    """Matrix is numerically rank deficient."""


class BreakpointError(NumericalError):
    """Evaluation requested too close to a non-smooth point."""


class NoRootError(NumericalError):
    """Root scan exhausted its window without bracketing a root."""


class InstanceTooLargeError(ConfigError):
    """Exhaustive search would exceed the enumeration budget."""
