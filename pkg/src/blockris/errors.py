class BlockrisError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(BlockrisError, ValueError):
    """An argument or configuration value violates its contract."""


class NumericError(BlockrisError, ArithmeticError):
    """An iterative routine failed to reach its stopping condition."""
