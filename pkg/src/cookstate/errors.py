"""Error hierarchy shared across the package.

Each class maps to one CLI exit code so failures surface consistently:
usage/config problems exit 2, bad data exits 3, numerical divergence
exits 4 and filesystem trouble exits 5.
"""


class CookstateError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(CookstateError):
    """Invalid configuration or usage (bad flag combination, unknown boundary...)."""

    exit_code = 2


class DataError(CookstateError):
    """Malformed or inconsistent input data (labels out of range, bad manifest...)."""

    exit_code = 3


class DimensionError(DataError):
    """Tensor shapes do not satisfy an operation's contract."""


class DomainError(DataError):
    """Values outside an operation's mathematical domain (empty reduction...)."""


class NumericError(CookstateError):
    """Non-finite values produced where the framework guarantees finiteness."""

    exit_code = 4


class IOFailure(CookstateError):
    """Filesystem or serialization failure."""

    exit_code = 5
