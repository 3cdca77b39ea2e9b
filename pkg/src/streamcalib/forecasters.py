"""Raw forecast producers: a streaming logistic model and an expert mixer."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator

from .validation import (
    check_covariates,
    check_outcome,
    check_probability,
    check_probability_array,
)

FORECAST_CLAMP = 1e-9


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


class OnlineLogisticForecaster(BaseEstimator):
    """Logistic probability forecaster trained one round at a time.

    Predictions are sigmoid(w . x), clamped away from {0, 1} so downstream
    bucketing always receives an interior probability. Updates take a
    gradient step on log loss; the step size is either fixed or adaptive
    per coordinate (inverse root of accumulated squared gradients, with the
    current gradient included in the accumulator before scaling so the
    first step stays bounded by the base rate).
    """

    def __init__(self, dim: int, learning_rate: float = 0.05,
                 rule: str = "fixed", stabilizer: float = 1e-8):
        self.dim = dim
        self.learning_rate = learning_rate
        self.rule = rule
        self.stabilizer = stabilizer

    def _ensure_state(self) -> None:
        if hasattr(self, "weights_"):
            return
        if self.rule not in ("fixed", "adaptive"):
            raise ValueError(f"unknown step-size rule {self.rule!r}")
        if int(self.dim) < 1:
            raise ValueError(f"dimension must be positive, got {self.dim}")
        self.weights_ = np.zeros(int(self.dim))
        self.grad_sq_ = np.zeros(int(self.dim))

    def predict_one(self, x) -> float:
        self._ensure_state()
        x = check_covariates(x, int(self.dim))
        p = _sigmoid(float(self.weights_ @ x))
        return min(max(p, FORECAST_CLAMP), 1.0 - FORECAST_CLAMP)

    def learn_one(self, x, y) -> None:
        self._ensure_state()
        x = check_covariates(x, int(self.dim))
        y = check_outcome(y)
        gradient = (_sigmoid(float(self.weights_ @ x)) - y) * x
        if self.rule == "fixed":
            self.weights_ -= self.learning_rate * gradient
        else:
            self.grad_sq_ += gradient**2
            self.weights_ -= self.learning_rate * gradient / np.sqrt(
                self.grad_sq_ + self.stabilizer
            )
        if not np.all(np.isfinite(self.weights_)):
            raise FloatingPointError("forecaster weights became non-finite")

    def partial_fit(self, X, y) -> "OnlineLogisticForecaster":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        for row, outcome in zip(X, np.asarray(y)):
            self.learn_one(row, outcome)
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Positive-class probability per row, as a flat vector."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.predict_one(row) for row in X])


class ExpertAggregator(BaseEstimator):
    """Exponential-weights mixture of expert probability forecasts.

    Log weights accumulate squared-loss penalties scaled by the anytime
    rate sqrt(8 ln K / t); the aggregate forecast is the weight-normalized
    convex combination of the experts, so it always stays inside the
    experts' range.
    """

    def __init__(self, n_experts: int):
        self.n_experts = n_experts

    def _ensure_state(self) -> None:
        if hasattr(self, "log_weights_"):
            return
        if int(self.n_experts) < 1:
            raise ValueError(f"need at least one expert, got {self.n_experts}")
        self.log_weights_ = np.zeros(int(self.n_experts))
        self.t_ = 0

    def weights(self) -> np.ndarray:
        self._ensure_state()
        shifted = np.exp(self.log_weights_ - self.log_weights_.max())
        return shifted / shifted.sum()

    def aggregate(self, expert_forecasts) -> float:
        self._ensure_state()
        forecasts = check_probability_array(expert_forecasts, "expert forecasts")
        if forecasts.shape[0] != int(self.n_experts):
            raise ValueError(
                f"expected {self.n_experts} expert forecasts, got {forecasts.shape[0]}"
            )
        return float(self.weights() @ forecasts)

    def update(self, expert_forecasts, y) -> None:
        self._ensure_state()
        forecasts = check_probability_array(expert_forecasts, "expert forecasts")
        if forecasts.shape[0] != int(self.n_experts):
            raise ValueError(
                f"expected {self.n_experts} expert forecasts, got {forecasts.shape[0]}"
            )
        y = check_outcome(y)
        self.t_ += 1
        rate = math.sqrt(8.0 * math.log(int(self.n_experts)) / self.t_)
        self.log_weights_ -= rate * (y - forecasts) ** 2


def clamp_probability(p: float) -> float:
    """Clamp into the open interval used for every raw forecast."""
    p = check_probability(p)
    return min(max(p, FORECAST_CLAMP), 1.0 - FORECAST_CLAMP)
