"""Input checking helpers used by every module."""

import numpy as np

from .errors import ValidationError


def ensure_matrix(a, name="matrix", dtype=np.float64):
    """Coerce to a 2-D array of the given dtype, raising on anything else."""
    try:
        arr = np.asarray(a, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def ensure_finite_matrix(a, name="matrix", dtype=np.float64):
    arr = ensure_matrix(a, name, dtype)
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def ensure_vector(x, name="vector"):
    try:
        arr = np.asarray(x, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name} is not numeric: {exc}") from None
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def ensure_fraction(value, name="fraction"):
    v = float(value)
    if not 0.0 < v < 1.0:
        raise ValidationError(f"{name} must be in (0, 1), got {value}")
    return v


def ensure_positive_int(value, name="value"):
    v = int(value)
    if v < 1:
        raise ValidationError(f"{name} must be a positive integer, got {value}")
    return v
