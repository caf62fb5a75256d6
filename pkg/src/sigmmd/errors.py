"""Exception types shared across the library.

The CLI maps ValidationError to exit code 2 and NumericError to exit code 3.
"""


class ValidationError(ValueError):
    """Input or configuration violates a documented precondition."""


class NumericError(RuntimeError):
    """A numerical routine failed (non-finite values, failed factorization)."""
