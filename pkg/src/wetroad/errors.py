"""Error taxonomy shared across the toolkit.

ValidationError covers malformed inputs and violated data invariants
(CLI exit code 3); NumericError covers non-finite values escaping a
numeric routine (CLI exit code 4).
"""


class ValidationError(ValueError):
    """Input data or configuration violates a documented invariant."""


class NumericError(ArithmeticError):
    """A numeric routine produced non-finite intermediate values."""
