"""Uniform forecast grids and the bucket partition of [0, 1]."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .validation import check_probability


@dataclass(frozen=True)
class ProbabilityGrid:
    """The finite grid {i/n : i = 0..n} all calibrated forecasts come from.

    ``n`` is the resolution count: n + 1 points with uniform spacing 1/n.
    Values are produced as exact ``i / n`` quotients rather than stored
    rounded constants.
    """

    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise ValueError(f"grid resolution must be an integer, got {self.n!r}")
        if self.n < 1:
            raise ValueError(f"grid resolution must be positive, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def for_accuracy(cls, n: int, epsilon: float) -> "ProbabilityGrid":
        """Construct a grid and enforce the spacing requirement 1/n < epsilon."""
        grid = cls(n)
        if not 0.0 < epsilon <= 1.0:
            raise ValueError(f"accuracy target must lie in (0, 1], got {epsilon!r}")
        if 1.0 / grid.n >= epsilon:
            raise ValueError(
                f"grid spacing 1/{grid.n} is not finer than accuracy target {epsilon}"
            )
        return grid

    @property
    def n_points(self) -> int:
        return self.n + 1

    def point(self, i: int) -> float:
        if not 0 <= i <= self.n:
            raise ValueError(f"grid index must lie in 0..{self.n}, got {i}")
        return i / self.n

    def points(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def nearest_index(self, p) -> int:
        """Index of the grid point closest to ``p``; ties break to the lower index."""
        p = check_probability(p)
        return int(np.argmin(np.abs(self.points() - p)))


def bucket_index(p_raw, n: int) -> int:
    """Map a raw forecast to its bucket j, i.e. the interval [j/n, (j+1)/n).

    The last interval [(n-1)/n, 1] is closed, so p_raw = 1 lands in bucket
    n - 1. Constant-time arithmetic; no search.
    """
    p_raw = check_probability(p_raw, "raw forecast")
    if n < 1:
        raise ValueError(f"bucket count must be positive, got {n}")
    return int(min(math.floor(p_raw * n), n - 1))
