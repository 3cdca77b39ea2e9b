"""Calibration and loss metrics, maintained incrementally.

The ledger keeps, per grid point, the total forecast weight and the
outcome-carrying part of that weight, plus running squared losses of the
emitted and the raw forecast streams. Every reported quantity is a cheap
function of these sufficient statistics.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import EmptyStateError
from .grid import ProbabilityGrid

SHARE_SUM_TOL = 1e-12


class ReliabilityBin(NamedTuple):
    value: float
    frequency: float
    share: float
    weight: float


class DecompositionRow(NamedTuple):
    bucket: int
    target: int
    instance_term: float
    aggregate_term: float
    instance_steps: int


class CalibrationLedger:
    """Sufficient statistics for calibration error and squared-loss regret.

    In expected mode the per-round weight vector is the full forecast
    distribution; in sampled mode it is the one-hot of the emitted index.
    The two loss accumulators always use the realized emitted value and
    the raw forecast as produced, independent of the weighting mode.
    """

    def __init__(self, grid: ProbabilityGrid):
        self.grid = grid
        self.weight = np.zeros(grid.n_points)
        self.outcome_weight = np.zeros(grid.n_points)
        self.steps = 0
        self.loss_emitted = 0.0
        self.loss_raw = 0.0

    def add(self, weights, y: int, emitted: float, raw: float) -> None:
        self.weight += weights
        self.outcome_weight += y * np.asarray(weights, dtype=float)
        self.steps += 1
        self.loss_emitted += (y - emitted) ** 2
        self.loss_raw += (y - raw) ** 2

    def to_dict(self) -> dict:
        return {
            "weight": self.weight.tolist(),
            "outcome_weight": self.outcome_weight.tolist(),
            "steps": self.steps,
            "loss_emitted": self.loss_emitted,
            "loss_raw": self.loss_raw,
        }

    @classmethod
    def from_dict(cls, grid: ProbabilityGrid, payload: dict) -> "CalibrationLedger":
        ledger = cls(grid)
        ledger.weight = np.asarray(payload["weight"], dtype=float)
        ledger.outcome_weight = np.asarray(payload["outcome_weight"], dtype=float)
        ledger.steps = int(payload["steps"])
        ledger.loss_emitted = float(payload["loss_emitted"])
        ledger.loss_raw = float(payload["loss_raw"])
        return ledger


def conditional_frequency(ledger: CalibrationLedger, i: int) -> float | None:
    """Observed outcome frequency at grid point i, or None for an empty bin."""
    if ledger.weight[i] == 0.0:
        return None
    return float(ledger.outcome_weight[i] / ledger.weight[i])


def calibration_error(ledger: CalibrationLedger) -> float:
    """Occupancy-weighted squared deviation between grid values and frequencies.

    Empty bins contribute nothing; they are reported as undefined rather
    than treated as calibrated.
    """
    if ledger.steps == 0:
        raise EmptyStateError("calibration error undefined on an empty ledger")
    occupied = ledger.weight > 0.0
    if not occupied.any():
        return 0.0
    freq = ledger.outcome_weight[occupied] / ledger.weight[occupied]
    values = ledger.grid.points()[occupied]
    shares = ledger.weight[occupied] / ledger.steps
    return float(((freq - values) ** 2 * shares).sum())


def l2_regret(ledger: CalibrationLedger) -> float:
    """Average squared-loss gap of the emitted stream over the raw stream."""
    if ledger.steps == 0:
        raise EmptyStateError("loss regret undefined on an empty ledger")
    return (ledger.loss_emitted - ledger.loss_raw) / ledger.steps


def reliability_bins(ledger: CalibrationLedger) -> list[ReliabilityBin]:
    """One row per occupied grid point, ascending by grid value."""
    if ledger.steps == 0:
        raise EmptyStateError("reliability rows undefined on an empty ledger")
    rows = []
    for i in range(ledger.grid.n_points):
        weight = float(ledger.weight[i])
        if weight <= 0.0:
            continue
        rows.append(
            ReliabilityBin(
                value=ledger.grid.point(i),
                frequency=float(ledger.outcome_weight[i] / weight),
                share=weight / ledger.steps,
                weight=weight,
            )
        )
    return rows


def bucket_decomposition(recalibrator) -> list[DecompositionRow]:
    """Both sides of the per-target Jensen inequality, for every pair.

    For each bucket instance i and grid target j the row carries the
    instance's own calibration term at j (normalized by its local step
    count) and the pooled calibration term at j computed from the summed
    statistics of all instances. Grouping rows by target and comparing
    ``aggregate_term`` against ``sum_i (instance_steps/T) * instance_term``
    reproduces the decomposition inequality.
    """
    instances = recalibrator.instances_
    total = recalibrator.steps_
    if total == 0 or not instances:
        raise EmptyStateError("decomposition undefined before any observed round")
    grid = recalibrator.grid_
    values = grid.points()

    pooled_weight = np.zeros(grid.n_points)
    pooled_outcome = np.zeros(grid.n_points)
    for state in instances.values():
        pooled_weight += state.weighted_count
        pooled_outcome += state.weighted_outcome

    aggregate = np.zeros(grid.n_points)
    occupied = pooled_weight > 0.0
    aggregate[occupied] = (
        (pooled_outcome[occupied] / pooled_weight[occupied] - values[occupied]) ** 2
        * pooled_weight[occupied]
        / total
    )

    rows = []
    for bucket in sorted(instances):
        state = instances[bucket]
        for j in range(grid.n_points):
            weight = float(state.weighted_count[j])
            if weight > 0.0:
                freq = state.weighted_outcome[j] / weight
                term = (freq - values[j]) ** 2 * weight / state.t
            else:
                term = 0.0
            rows.append(
                DecompositionRow(
                    bucket=bucket,
                    target=j,
                    instance_term=float(term),
                    aggregate_term=float(aggregate[j]),
                    instance_steps=state.t,
                )
            )
    return rows
