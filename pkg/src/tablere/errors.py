"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command-line driver
can translate exceptions without a lookup table.
"""


class TableReError(Exception):
    exit_code = 1


class ConfigError(TableReError, ValueError):
    """Invalid configuration or usage (bad preset, rate >= 1, empty vocab)."""

    exit_code = 2


class UsageError(TableReError, RuntimeError):
    """API called out of order, e.g. backward without a forward graph."""

    exit_code = 2


class ShapeError(TableReError, ValueError):
    exit_code = 3


class DataError(TableReError, ValueError):
    """Input data violates a contract (label out of range, bad token id)."""

    exit_code = 3


class LabelError(DataError):
    pass


class FormatError(TableReError, ValueError):
    """A binary or text file does not match its declared layout."""

    exit_code = 3


class NumericError(TableReError, ArithmeticError):
    """Non-finite loss or failed gradient check."""

    exit_code = 4
