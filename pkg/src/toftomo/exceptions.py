"""Exception hierarchy shared by all modules."""


class TomographyError(Exception):
    """Base class for errors raised by toftomo."""


class TruncationError(TomographyError, ValueError):
    """An operation does not fit inside the truncated Fock basis.

    Attributes
    ----------
    leakage : float
        Estimated population pushed outside the retained basis.
    """

    def __init__(self, message, leakage=float("nan")):
        super().__init__(message)
        self.leakage = leakage


class UnsupportedStateError(TomographyError, ValueError):
    """Requested a closed form that is only available for low Fock states."""


class DegenerateDataError(TomographyError, ValueError):
    """Input carries no usable signal (all-zero image, empty support, ...)."""


class AliasingError(TomographyError, ValueError):
    """Image grid is too coarse for the structure it has to represent."""


class ConfigError(TomographyError, ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class TruncationWarning(UserWarning):
    """Evolved population reached the buffer levels at the top of the basis."""
