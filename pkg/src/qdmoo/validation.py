"""Input validation helpers and the package exception types."""

import numbers

import numpy as np
from sklearn.utils import check_array


class ConfigurationError(ValueError):
    """Raised when a parameter or configuration value is invalid."""


class EvaluationError(ArithmeticError):
    """Raised when an evaluation or gradient produces non-finite values."""


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ConfigurationError(f"{name} must be a finite real number, got {value!r}")
    if strict and value <= 0:
        raise ConfigurationError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ConfigurationError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigurationError(f"{name} must be >= {minimum}, got {value!r}")
    return int(value)


def check_bounds(bounds, dim=None, name="bounds", allow_degenerate=False):
    """Validate a box given as a ``(dim, 2)`` array of ``[lower, upper]`` rows.

    A pair of scalars ``(lo, hi)`` is broadcast to ``dim`` rows when ``dim`` is
    given.
    """
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim == 1 and arr.shape == (2,):
        if dim is None:
            raise ConfigurationError(f"{name}: scalar interval needs an explicit dimension")
        arr = np.tile(arr, (dim, 1))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigurationError(f"{name} must have shape (dim, 2), got {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ConfigurationError(f"{name} has {arr.shape[0]} rows, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite")
    lo, hi = arr[:, 0], arr[:, 1]
    if allow_degenerate:
        ok = np.all(lo <= hi)
    else:
        ok = np.all(lo < hi)
    if not ok:
        raise ConfigurationError(f"{name} must satisfy lower < upper in every dimension")
    return arr


def check_solutions(X, n=None, name="X"):
    """Return ``X`` as a finite float64 matrix with ``n`` columns."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                        input_name=name)
    except ValueError as exc:
        raise EvaluationError(str(exc)) from exc
    if n is not None and X.shape[1] != n:
        raise ConfigurationError(f"{name} has {X.shape[1]} columns, expected {n}")
    return X


def check_vector(x, n=None, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigurationError(f"{name} must be one-dimensional, got shape {x.shape}")
    if n is not None and x.shape[0] != n:
        raise ConfigurationError(f"{name} has length {x.shape[0]}, expected {n}")
    if not np.all(np.isfinite(x)):
        raise EvaluationError(f"{name} contains non-finite values")
    return x
