"""Independent brute-force oracles used to pin expected test values.

Everything here is deliberately written with plain loops and separate
numerics (eigendecomposition, direct summation) so the package's
incremental implementations are checked against a different path.
"""

from __future__ import annotations

import math

import numpy as np


def build_regret_chain(regret: np.ndarray) -> np.ndarray | None:
    """Row-stochastic chain from a regret matrix, per its definition.

    Off-diagonal entries proportional to positive parts, diagonal absorbs
    the remainder. Uses the max positive row sum as the scale (fixed
    points do not depend on this choice). None when no positive part.
    """
    positive = np.maximum(np.asarray(regret, dtype=float), 0.0)
    np.fill_diagonal(positive, 0.0)
    scale = positive.sum(axis=1).max()
    if scale <= 0.0:
        return None
    chain = positive / scale
    np.fill_diagonal(chain, 1.0 - chain.sum(axis=1))
    return chain


def stationary_by_eigen(chain: np.ndarray) -> np.ndarray:
    """One stationary distribution of a row-stochastic chain via eigenvectors.

    Only meaningful for chains with a unique stationary distribution; used
    on small hand-built cases.
    """
    values, vectors = np.linalg.eig(chain.T)
    index = int(np.argmin(np.abs(values - 1.0)))
    vec = np.real(vectors[:, index])
    vec = np.abs(vec)
    return vec / vec.sum()


def regret_matrix_from_rounds(rounds, n: int) -> list[list[float]]:
    """Recompute cumulative swap regrets from logged (played, y) pairs."""
    k = n + 1
    regret = [[0.0] * k for _ in range(k)]
    for record in rounds:
        played = record["distribution"]
        y = record["y"]
        for i in range(k):
            loss_i = (y - i / n) ** 2
            for j in range(k):
                regret[i][j] += played[i] * (loss_i - (y - j / n) ** 2)
    return regret


def ledger_from_rounds(rounds, n: int) -> dict:
    """Recompute grid weights, outcome weights, and losses from a transcript."""
    k = n + 1
    weight = [0.0] * k
    outcome_weight = [0.0] * k
    loss_emitted = 0.0
    loss_raw = 0.0
    for record in rounds:
        for i in range(k):
            weight[i] += record["distribution"][i]
            outcome_weight[i] += record["y"] * record["distribution"][i]
        if "emitted" in record:
            loss_emitted += (record["y"] - record["emitted"]) ** 2
        if "p_raw" in record:
            loss_raw += (record["y"] - record["p_raw"]) ** 2
    return {
        "weight": weight,
        "outcome_weight": outcome_weight,
        "steps": len(rounds),
        "loss_emitted": loss_emitted,
        "loss_raw": loss_raw,
    }


def calibration_error_direct(weight, outcome_weight, steps: int, n: int) -> float:
    """The occupancy-weighted squared deviation, summed with plain loops."""
    total = 0.0
    for i in range(n + 1):
        if weight[i] > 0.0:
            rho = outcome_weight[i] / weight[i]
            total += (rho - i / n) ** 2 * (weight[i] / steps)
    return total


def instance_calibration_error(state) -> float:
    """Expected-mode calibration error of one calibrator's own statistics."""
    return calibration_error_direct(
        state.weighted_count, state.weighted_outcome, state.t, state.grid.n
    )


def logistic(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


def hedge_regret_bound(n_experts: int, horizon: int) -> float:
    """Average-regret scale for exponential weights over a known horizon."""
    return math.sqrt(math.log(n_experts) / (2.0 * horizon))
