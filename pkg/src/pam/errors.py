"""Exception hierarchy shared by every module."""


class PamError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PamError, ValueError):
    """Invalid model parameters or run configuration."""


class QuadratureError(PamError, ArithmeticError):
    """A quadrature did not reach the requested tolerance.

    Kept distinct from an infinite result: divergence is decided
    analytically before any quadrature runs.
    """


class SeriesTruncationError(PamError, ArithmeticError):
    """Series terms did not decay within the available number of orders."""


class UnsupportedError(PamError, NotImplementedError):
    """Requested computation is outside the supported range (e.g. chaos order > 2)."""


class MemoryBudgetError(PamError, MemoryError):
    """A coefficient array would exceed the configured memory budget."""
