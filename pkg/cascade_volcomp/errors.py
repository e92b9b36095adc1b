"""
Exception types raised by the library. They derive from the built-in exception types,
so code catching ``ValueError`` keeps working. The command line maps them to exit
codes.
"""


class VolcompError(Exception):
    """Base class for all library errors."""


class ConfigError(VolcompError, ValueError):
    """Invalid configuration or parameters. Exit code 1."""


class DataError(VolcompError, ValueError):
    """Input data is missing, inconsistent or unusable. Exit code 2."""


class FormatError(DataError):
    """A file does not follow its declared format. Exit code 2."""


class DivergenceError(VolcompError, ArithmeticError):
    """Training produced a non-finite loss. Exit code 3."""
