"""Online calibration over a finite grid via internal-regret matching.

One calibrator instance plays a randomized forecast drawn from the grid
every round, observes the binary outcome, and accumulates a matrix of
cumulative swap regrets. Driving every pairwise swap regret to zero forces
the conditional outcome frequency at each grid point toward that point's
value, which is exactly calibration.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import EmptyStateError, FixedPointError
from .grid import ProbabilityGrid
from .validation import check_distribution, check_grid_index, check_outcome

STATIONARY_TOL = 1e-10
MAX_DOUBLINGS = 64


def _stationary_by_solve(chain: np.ndarray) -> np.ndarray | None:
    """Solve w = w @ chain directly; None when the system is unusable.

    Unique-stationary chains yield the answer in one small solve. Reducible
    chains make the system singular or push entries negative, in which case
    the caller falls back to power iteration.
    """
    k = chain.shape[0]
    system = chain.T - np.eye(k)
    system[-1, :] = 1.0
    rhs = np.zeros(k)
    rhs[-1] = 1.0
    try:
        w = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError:
        return None
    if w.min() < -1e-12:
        return None
    w = np.maximum(w, 0.0)
    total = w.sum()
    if total <= 0.0 or not np.isfinite(total):
        return None
    w /= total
    if float(np.abs(w - w @ chain).sum()) > STATIONARY_TOL:
        return None
    return w


def _stationary_distribution(chain: np.ndarray) -> np.ndarray:
    """Stationary distribution of a lazy row-stochastic chain.

    Tries one direct linear solve first; when the chain is reducible or
    too ill-conditioned for that, computes the limit of uniform @ chain^k
    by repeated squaring, which reaches effective powers of 2^64 and so
    covers chains whose one-step iteration mixes far too slowly for any
    fixed cap. The residual is always checked against the one-step chain.
    """
    w = _stationary_by_solve(chain)
    if w is not None:
        return w
    k = chain.shape[0]
    w = np.full(k, 1.0 / k)
    power = chain
    residual = float(np.abs(w - w @ chain).sum())
    if residual <= STATIONARY_TOL:
        return w
    for _ in range(MAX_DOUBLINGS):
        w = w @ power
        residual = float(np.abs(w - w @ chain).sum())
        if residual <= STATIONARY_TOL:
            return w / w.sum()
        power = power @ power
    raise FixedPointError(residual, MAX_DOUBLINGS)


def sample_forecast(distribution, rng: np.random.Generator) -> int:
    """Draw a grid index from a forecast distribution, one uniform per call."""
    distribution = np.asarray(distribution, dtype=float)
    cdf = np.cumsum(distribution)
    u = rng.random()
    return int(min(np.searchsorted(cdf, u, side="right"), len(distribution) - 1))


class RegretMatchingCalibrator:
    """State and update rules of one calibration subroutine.

    Maintains, per pair of grid points (i, j), the cumulative gain that
    retroactively swapping every play of i for j would have produced under
    squared loss. Forecasts are the stationary distribution of the chain
    whose off-diagonal transition weights are the positive parts of those
    regrets; rows with no positive part keep their mass in place.

    ``weighted_*`` statistics accumulate the played distribution itself
    (the expected-update convention); ``sampled_count`` records the indices
    actually drawn. Callers choosing sampled updates pass the one-hot play
    to :meth:`update` instead of the distribution.
    """

    def __init__(self, grid: ProbabilityGrid, record_transcript: bool = False):
        self.grid = grid
        k = grid.n_points
        self.regret = np.zeros((k, k))
        self.weighted_count = np.zeros(k)
        self.weighted_outcome = np.zeros(k)
        self.sampled_count = np.zeros(k, dtype=np.int64)
        self.t = 0
        self.transcript: list[dict] | None = [] if record_transcript else None
        self._points = grid.points()

    def _cold_start_index(self) -> int:
        """Grid point nearest the running mean of observed outcomes.

        With no observations the mean is taken as 0.5. Ties break toward
        the lower index (argmin returns the first minimizer).
        """
        if self.t == 0:
            mean = 0.5
        else:
            mean = float(self.weighted_outcome.sum()) / self.t
        return int(np.argmin(np.abs(self._points - mean)))

    def forecast_distribution(self) -> np.ndarray:
        """Current randomized forecast over the grid.

        With any positive swap regret present this is the stationary
        distribution of the positive-part regret chain; otherwise a point
        mass on the cold-start grid point.
        """
        positive = np.maximum(self.regret, 0.0)
        row_sums = positive.sum(axis=1)
        top = row_sums.max()
        if top <= 0.0:
            w = np.zeros(self.grid.n_points)
            w[self._cold_start_index()] = 1.0
            return w
        # Scale by twice the largest row so every diagonal stays >= 1/2,
        # keeping the chain aperiodic.
        chain = positive / (2.0 * top)
        np.fill_diagonal(chain, 0.0)
        np.fill_diagonal(chain, 1.0 - chain.sum(axis=1))
        return _stationary_distribution(chain)

    def update(self, played, sampled: int, y) -> None:
        """Fold one observed round into the state.

        ``played`` is the probability vector actually used for this round's
        bookkeeping (full distribution or one-hot), ``sampled`` the grid
        index that was emitted, ``y`` the binary outcome.
        """
        played = check_distribution(played, self.grid.n_points)
        sampled = check_grid_index(sampled, self.grid.n)
        y = check_outcome(y)
        losses = (y - self._points) ** 2
        self.regret += played[:, None] * (losses[:, None] - losses[None, :])
        self.weighted_count += played
        self.weighted_outcome += y * played
        self.sampled_count[sampled] += 1
        self.t += 1
        if self.transcript is not None:
            self.transcript.append(
                {"t": self.t, "distribution": played.tolist(), "sampled": sampled, "y": y}
            )

    def internal_regret(self) -> float:
        """Largest per-round swap regret over pairs i != j, rows ever played.

        Rows with zero accumulated play carry identically zero regret
        entries and are excluded so the statistic reflects actual play;
        the result may be negative.
        """
        if self.t == 0:
            raise EmptyStateError("internal regret undefined before any update")
        scaled = self.regret / self.t
        np.fill_diagonal(scaled, -np.inf)
        played_rows = self.weighted_count > 0.0
        return float(scaled[played_rows].max())

    def external_regret(self, j: int) -> float:
        """Per-round regret of the whole play history against constant j/n."""
        if self.t == 0:
            raise EmptyStateError("external regret undefined before any update")
        j = check_grid_index(j, self.grid.n)
        return float(self.regret[:, j].sum()) / self.t

    def expected_point_mass_gap(self) -> float:
        """Max per-point gap between realized play counts and expected plays."""
        if self.t == 0:
            raise EmptyStateError("point-mass gap undefined before any update")
        return float(np.abs(self.sampled_count - self.weighted_count).max()) / self.t

    def to_dict(self) -> dict:
        return {
            "n": self.grid.n,
            "regret": self.regret.tolist(),
            "weighted_count": self.weighted_count.tolist(),
            "weighted_outcome": self.weighted_outcome.tolist(),
            "sampled_count": self.sampled_count.tolist(),
            "t": self.t,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RegretMatchingCalibrator":
        state = cls(ProbabilityGrid(payload["n"]))
        state.regret = np.asarray(payload["regret"], dtype=float)
        state.weighted_count = np.asarray(payload["weighted_count"], dtype=float)
        state.weighted_outcome = np.asarray(payload["weighted_outcome"], dtype=float)
        state.sampled_count = np.asarray(payload["sampled_count"], dtype=np.int64)
        state.t = int(payload["t"])
        return state


def write_transcript(records, path) -> None:
    """Write transcript records as one JSON object per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def read_transcript(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
