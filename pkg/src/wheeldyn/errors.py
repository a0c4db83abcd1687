"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed or inconsistent input data (parse errors, invariant violations)."""


class NumericError(Exception):
    """Non-finite values or numeric domain violations during computation."""
