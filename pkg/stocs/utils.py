from numpy.typing import ArrayLike
import numpy as np

from .geometry import FloatArray, dim_from_config_size


def wrap_angle(angle: ArrayLike) -> FloatArray:
    """Wrap angles into ``[-pi, pi)``."""
    a = np.asarray(angle, dtype=float)
    return np.asarray((a + np.pi) % (2.0 * np.pi) - np.pi)


def unwrap_goal(start: ArrayLike, goal: ArrayLike) -> FloatArray:
    """
    Return ``goal`` with each angle shifted by a multiple of ``2 pi`` so that it is
    reached from ``start`` along the shorter arc.
    """
    q0 = np.asarray(start, dtype=float).reshape(-1)
    q1 = np.asarray(goal, dtype=float).reshape(-1).copy()
    dim = dim_from_config_size(q0.size)
    q1[dim:] = q0[dim:] + wrap_angle(q1[dim:] - q0[dim:])
    return q1


def configuration_error(q: ArrayLike, target: ArrayLike) -> FloatArray:
    """Coordinate-wise difference ``q - target`` with angle differences wrapped."""
    a = np.asarray(q, dtype=float).reshape(-1)
    b = np.asarray(target, dtype=float).reshape(-1)
    dim = dim_from_config_size(a.size)
    diff = a - b
    diff[dim:] = wrap_angle(diff[dim:])
    return diff


def format_float(value: float, precision: int) -> str:
    """Fixed-precision formatting without negative zero."""
    text = f"{value:.{precision}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text
