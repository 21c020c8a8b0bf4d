"""Input validation helpers shared by the numerical modules."""

import numbers

import numpy as np

from .exceptions import AsymmetryError, DimensionError, ParameterError

SYMMETRY_RTOL = 1e-10


def check_matrix(M, name="matrix", *, allow_empty=False):
    """Return ``M`` as a finite 2-D float64 array."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if not allow_empty and (M.shape[0] < 1 or M.shape[1] < 1):
        raise DimensionError(f"{name} must have at least one row and column, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ParameterError(f"{name} contains NaN or Inf")
    return M


def check_square(M, name="matrix"):
    M = check_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def check_symmetric(M, name="matrix", rtol=SYMMETRY_RTOL):
    """Validate near-symmetry and return the symmetrized ``(M + M.T) / 2``.

    Asymmetry is measured as ``max|M - M.T| / max(max|M|, tiny)``.
    """
    M = check_square(M, name)
    scale = np.max(np.abs(M))
    asym = np.max(np.abs(M - M.T))
    if asym > rtol * max(scale, np.finfo(float).tiny):
        raise AsymmetryError(f"{name} is not symmetric (relative asymmetry {asym / scale:.3e})")
    return 0.5 * (M + M.T)


def check_paired(X, Y):
    X = check_matrix(X, "X")
    Y = check_matrix(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(
            f"X and Y must have the same number of columns (samples), got {X.shape[1]} and {Y.shape[1]}"
        )
    return X, Y


def check_nonneg(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ParameterError(f"{name} must be a finite non-negative real, got {value!r}")
    return float(value)


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ParameterError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
