"""Input validation helpers used by the estimators and free functions."""

import numbers

import numpy as np
from sklearn.utils import check_array

from .exceptions import InsufficientDataError


def check_durations(X, *, min_samples=1, name="durations"):
    """Return ``X`` as a 1-D float64 array of strictly positive, finite values.

    Accepts a sequence, a 1-D array, a ``(n, 1)`` column (sklearn style) or a
    :class:`~survlink.channel.SampleSet`.
    """
    X = getattr(X, "durations", X)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 1:
        raise ValueError(f"{name} must be 1-D or a single column, got shape {X.shape}")
    if X.size < min_samples:
        raise InsufficientDataError(
            f"{name}: need at least {min_samples} sample(s), got {X.size}"
        )
    X = check_array(X.reshape(-1, 1), ensure_min_samples=0)[:, 0]
    if np.any(X <= 0):
        raise ValueError(f"{name} must be strictly positive")
    return X


def check_probability(value, name, *, closed_right=False):
    """Check ``value`` lies in (0, 1), or (0, 1] when ``closed_right``."""
    if not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    upper_ok = value <= 1 if closed_right else value < 1
    if not (value > 0 and upper_ok):
        bracket = "]" if closed_right else ")"
        raise ValueError(f"{name} must lie in (0, 1{bracket}, got {value}")
    return float(value)


def check_nonnegative(value, name):
    if not np.all(np.asarray(value) >= 0):
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return value
