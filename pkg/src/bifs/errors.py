"""Exception hierarchy shared by the library and the command line."""


class BIFSError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(BIFSError, ValueError):
    """Invalid or unresolvable configuration."""

    exit_code = 2


class DataError(BIFSError, ValueError):
    """Malformed input data or file."""

    exit_code = 3


class StructuralError(DataError):
    """Inputs whose shapes or site layouts do not match."""


class NumericError(BIFSError, ArithmeticError):
    """A numerical procedure could not produce a usable result."""

    exit_code = 4


class EstimationError(NumericError):
    pass


class InitializationError(NumericError):
    pass
