from __future__ import annotations

from collections.abc import Callable

import numpy as np

from memformer_lfom.autodiff.tape import Matrix


def numerical_gradient(
    fn: Callable[[Matrix], float], value: Matrix, eps: float = 1e-6
) -> Matrix:
    """Central finite differences of a scalar function of one matrix."""
    value = np.array(value, dtype=np.float64)
    grad = np.zeros_like(value)
    for idx in np.ndindex(value.shape):
        original = value[idx]
        value[idx] = original + eps
        upper = fn(value.copy())
        value[idx] = original - eps
        lower = fn(value.copy())
        value[idx] = original
        grad[idx] = (upper - lower) / (2.0 * eps)
    return grad


def relative_error(analytic: Matrix, numeric: Matrix) -> float:
    """max |analytic - numeric| / max(1, |numeric|), entrywise."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    if analytic.size == 0:
        return 0.0
    return float(
        np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric)))
    )
