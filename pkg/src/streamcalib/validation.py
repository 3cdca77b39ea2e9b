"""Input validation helpers used at every public entry point."""

from __future__ import annotations

import numbers

import numpy as np

DISTRIBUTION_SUM_TOL = 1e-12


def check_probability(p, name: str = "probability") -> float:
    p = float(p)
    if not np.isfinite(p) or p < 0.0 or p > 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")
    return p


def check_outcome(y) -> int:
    """Coerce a binary outcome to int, rejecting anything outside {0, 1}."""
    if isinstance(y, (bool, np.bool_)):
        return int(y)
    if isinstance(y, numbers.Real) and float(y) in (0.0, 1.0):
        return int(y)
    raise ValueError(f"outcome must be 0 or 1, got {y!r}")


def check_distribution(w, n_points: int) -> np.ndarray:
    """Validate a probability vector over the forecast grid."""
    w = np.asarray(w, dtype=float)
    if w.shape != (n_points,):
        raise ValueError(f"distribution must have shape ({n_points},), got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise ValueError("distribution entries must be finite and nonnegative")
    if abs(w.sum() - 1.0) > DISTRIBUTION_SUM_TOL:
        raise ValueError(f"distribution must sum to 1 within {DISTRIBUTION_SUM_TOL}, got sum {w.sum()!r}")
    return w


def check_grid_index(i, n: int) -> int:
    i = int(i)
    if not 0 <= i <= n:
        raise ValueError(f"grid index must lie in 0..{n}, got {i}")
    return i


def check_covariates(x, dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"covariate vector must be one-dimensional, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariates must be finite")
    if dim is not None and x.shape[0] != dim:
        raise ValueError(f"covariate vector has dimension {x.shape[0]}, expected {dim}")
    return x


def check_probability_array(values, name: str = "probabilities") -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {values.shape}")
    if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return values


def check_outcome_array(values) -> np.ndarray:
    values = np.asarray(values)
    if values.ndim != 1:
        raise ValueError(f"outcomes must be one-dimensional, got shape {values.shape}")
    as_int = values.astype(np.int64, copy=False) if values.dtype != np.int64 else values
    if not np.array_equal(as_int, values) or not np.all((as_int == 0) | (as_int == 1)):
        raise ValueError("outcomes must all be 0 or 1")
    return as_int


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise ValueError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return seed
