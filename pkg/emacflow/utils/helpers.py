"""
Utility helper functions
"""
import re
from typing import Any, Callable, Tuple

import numpy as np

from emacflow.utils.exceptions import EvaluationException


def slugify(text: str) -> str:
    """Convert text to a filesystem-friendly slug"""
    slug = re.sub(r'[^\w\s.-]', '', text.lower())
    slug = re.sub(r'[-\s]+', '-', slug)
    return slug.strip('-')


def sweep_label(parameter: str, value: float) -> str:
    """Directory name for one sweep member, e.g. ``h_0.125``"""
    return slugify(f"{parameter}_{value:.6g}")


def format_float(value: Any) -> str:
    """CSV cell for an optional float: shortest round-trip repr, empty for None"""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def evaluate_vector(
    f: Callable, x: np.ndarray, y: np.ndarray, t: float, what: str = "function"
) -> np.ndarray:
    """Evaluate a vector field f(x, y, t) -> (fx, fy) at many points; returns shape (2, N)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    fx, fy = f(x, y, t)
    values = np.vstack([
        np.broadcast_to(np.asarray(fx, dtype=float), x.shape).ravel(),
        np.broadcast_to(np.asarray(fy, dtype=float), x.shape).ravel(),
    ])
    _check_finite(values, x.ravel(), y.ravel(), what)
    return values


def evaluate_scalar(
    f: Callable, x: np.ndarray, y: np.ndarray, t: float, what: str = "function"
) -> np.ndarray:
    """Evaluate a scalar field f(x, y, t) at many points; returns shape (N,)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    values = np.broadcast_to(np.asarray(f(x, y, t), dtype=float), x.shape).ravel().copy()
    _check_finite(values[None, :], x.ravel(), y.ravel(), what)
    return values


def _check_finite(values: np.ndarray, x: np.ndarray, y: np.ndarray, what: str) -> None:
    bad = ~np.all(np.isfinite(values), axis=0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise EvaluationException(
            f"{what} is not finite at ({x[k]:.6g}, {y[k]:.6g})"
        )


def zero_vector_field(x: np.ndarray, y: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """The field (0, 0)"""
    return np.zeros_like(x), np.zeros_like(y)
