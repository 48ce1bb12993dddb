"""Input validation helpers shared across the toolkit."""

import numpy as np


class ShapeMismatchError(ValueError):
    """Two T-F matrices that must share a grid do not."""


def check_finite(x, name="array"):
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains NaN or Inf")
    return x


def check_same_shape(a, b, what="spectrograms"):
    if a.shape != b.shape:
        raise ShapeMismatchError(
            f"{what} must share a shape, got {a.shape} and {b.shape}"
        )


def as_1d_float(samples, name="samples"):
    """Coerce to a contiguous 1-D float64 array, rejecting non-finite input."""
    x = np.ascontiguousarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    return check_finite(x, name)


def as_2d_float(matrix, name="matrix"):
    x = np.ascontiguousarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    return x
