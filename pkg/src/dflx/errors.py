"""Exception hierarchy shared by every module."""


class DflxError(Exception):
    """Base class for all errors raised by dflx."""


class InvalidInputError(DflxError, ValueError):
    """Input violates a precondition (non-finite values, bad parameter, bad range)."""


class GridMismatchError(InvalidInputError):
    """Two fields that must share a grid do not."""


class FormatError(DflxError):
    """A DFX1 file or a report could not be parsed."""


class ValidationError(DflxError):
    """A computed invariant failed its check."""


class GeneratorError(DflxError):
    """A synthetic field could not meet its construction target."""


class IntegrationError(DflxError):
    """Time integration diverged or was misconfigured."""
