"""Order-statistic helpers shared by the forecast ensemble and the simulator."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def nearest_rank(n: int, p: float) -> int:
    """1-based rank of the nearest-rank ``p``-th percentile among ``n`` values.

    With n=100, p=2.5 gives 3 and p=97.5 gives 98. Exact rational arithmetic
    keeps p*n/100 from drifting across an integer boundary.
    """
    if n < 1:
        raise ValueError("need at least one value")
    if not 0 < p <= 100:
        raise ValueError(f"percentile out of range: {p}")
    return max(1, math.ceil(Fraction(str(p)) * n / 100))


def percentile_nearest_rank(values: np.ndarray, p: float, axis: int = 0) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    k = nearest_rank(values.shape[axis], p)
    return np.take(np.sort(values, axis=axis), k - 1, axis=axis)


def band(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (p2.5, median, p97.5) along ``axis`` using nearest-rank."""
    return (
        percentile_nearest_rank(values, 2.5, axis),
        percentile_nearest_rank(values, 50, axis),
        percentile_nearest_rank(values, 97.5, axis),
    )
