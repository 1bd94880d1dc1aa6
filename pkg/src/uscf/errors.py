"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError is a data or usage
problem (exit 2), NumericalError is a numerical failure such as rank
deficiency (exit 3).
"""


class UscfError(Exception):
    """Base class for all library errors."""


class ValidationError(UscfError):
    """Malformed input data: bad files, shape mismatches, bad parameters."""


class NumericalError(UscfError):
    """Numerical failure: rank out of range, effective rank deficiency."""


class NotFittedError(UscfError, AttributeError):
    """An estimator method was called before fit()."""
