"""Exception taxonomy shared by the package and the CLI exit-code mapping."""


class LimbtomoError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(LimbtomoError):
    """Invalid configuration: bad parameters, violated solver bounds, missing weights."""

    exit_code = 2


class ParameterError(ConfigurationError):
    """A single argument is out of its documented range."""


class DataError(LimbtomoError):
    """Malformed or inconsistent input data (files, arrays)."""

    exit_code = 3


class DimensionError(DataError):
    """Array shapes do not match the operation's contract."""


class NumericError(LimbtomoError):
    """Non-finite values or numerically impossible states."""

    exit_code = 4
