"""Exception types shared across the package."""


class InputError(ValueError):
    """Rejected input: dimension mismatch, out-of-range value, bad schema."""


class IntegrationError(RuntimeError):
    """A time-stepping routine produced a non-finite state."""


class FlowFault(IntegrationError):
    """The transport Jacobian lost positivity (det J <= 0)."""


class LeakageError(RuntimeError):
    """Norm reaching the outermost mode shell exceeded the hard limit."""


class LeakageWarning(UserWarning):
    """Norm reaching the outermost mode shell exceeded the soft limit."""
