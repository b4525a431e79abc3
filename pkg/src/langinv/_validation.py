"""Small input-validation helpers used by the public entry points."""

from __future__ import annotations

import numpy as np


def check_array(x, name: str, *, ndim=None, shape=None, dtype=np.float64,
                finite: bool = True) -> np.ndarray:
    """Coerce to an ndarray and validate dimensionality, shape and finiteness.

    ``shape`` entries set to ``None`` are unconstrained.
    """
    arr = np.asarray(x, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got {arr.ndim}")
    if shape is not None:
        if len(shape) != arr.ndim:
            raise ValueError(f"{name} must have {len(shape)} dimensions, got {arr.ndim}")
        for axis, want in enumerate(shape):
            if want is not None and arr.shape[axis] != want:
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected {want} along axis {axis}"
                )
    if finite and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_positive(value, name: str, *, strict: bool = True) -> float:
    value = float(value)
    if strict and not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and not value >= 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_int(value, name: str, *, minimum=None) -> int:
    if not float(value) == int(value):
        raise ValueError(f"{name} must be an integer, got {value}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_in(value, options, name: str):
    if value not in options:
        raise ValueError(f"{name} must be one of {sorted(options)}, got {value!r}")
    return value
