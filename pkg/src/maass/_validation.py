"""Small input checks shared by the public functions."""

import math

import numpy as np


def check_positive(value, name):
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def check_symmetry(symmetry):
    if symmetry not in ("even", "odd"):
        raise ValueError(f"symmetry must be 'even' or 'odd', got {symmetry!r}")
    return symmetry


def check_heights(y):
    y = np.asarray(y, dtype=float)
    if y.size and not (np.all(np.isfinite(y)) and np.all(y > 0)):
        raise ValueError("points must lie in the upper half-plane (y > 0)")
    return y


def check_sorted_strictly(values, name):
    values = np.asarray(values, dtype=float)
    if values.size > 1 and not np.all(np.diff(values) > 0):
        raise ValueError(f"{name} must be strictly increasing")
    return values
