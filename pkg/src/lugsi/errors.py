"""Exception types shared across the package.

DataError covers everything wrong with inputs (malformed files, dimension
mismatches, contract violations); NumericError covers failures of the
numerical core (non-finite arithmetic, factorization breakdown). The CLI
maps them to distinct exit codes.
"""


class LugsiError(Exception):
    """Base class for all package-specific errors."""


class DataError(LugsiError, ValueError):
    """Invalid or inconsistent input data."""


class NumericError(LugsiError, ArithmeticError):
    """Numerical failure: non-finite values or a broken factorization."""
