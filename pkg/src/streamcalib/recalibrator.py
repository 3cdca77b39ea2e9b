"""Streaming recalibration: route raw forecasts to per-bucket calibrators.

[0, 1] is split into ``n_bins`` equal buckets. Each bucket lazily owns an
independent :class:`~streamcalib.calibrator.RegretMatchingCalibrator` over
the grid {i/n_bins}; a raw forecast is routed to its bucket's calibrator
and that calibrator's randomized grid forecast is emitted in its place.
The protocol is strictly alternating: ``step`` produces a forecast, then
``observe`` must deliver the outcome before the next ``step``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .calibrator import RegretMatchingCalibrator, sample_forecast
from .errors import ProtocolOrderError
from .grid import ProbabilityGrid, bucket_index
from .metrics import CalibrationLedger
from .validation import (
    check_outcome,
    check_outcome_array,
    check_probability,
    check_probability_array,
    check_seed,
)

SNAPSHOT_SCHEMA = "streamcalib/recalibrator"
SNAPSHOT_VERSION = 1


@dataclass
class _PendingStep:
    bucket: int
    p_raw: float
    distribution: np.ndarray
    sampled: int
    emitted: float


def _one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


class OnlineRecalibrator(BaseEstimator, TransformerMixin):
    """Turn any stream of raw probability forecasts into calibrated ones.

    Parameters
    ----------
    n_bins : int
        Bucket count and grid resolution (one value serves both roles, so
        each bucket's nominal value j/n_bins is a playable grid point).
    seed : int
        Master seed. Bucket j's sampler is seeded from (seed, j), so
        per-bucket randomness does not depend on creation order.
    update_mode : {"expected", "sampled"}
        Whether calibrator regrets accumulate the full played distribution
        or the realized one-hot play. Metrics ledgers always track both
        weightings in parallel.
    record_transcript : bool
        Keep an in-memory log of every observed round for replay oracles.

    Streaming use is ``step(p_raw)`` / ``observe(y)`` pairs. ``fit(P, y)``
    replays a whole stream through the same protocol and stores the online
    emissions in ``emitted_``; ``transform(P)`` maps raw forecasts through
    the current per-bucket expected forecasts without touching state.
    """

    def __init__(self, n_bins: int = 10, seed: int = 0,
                 update_mode: str = "expected", record_transcript: bool = False):
        self.n_bins = n_bins
        self.seed = seed
        self.update_mode = update_mode
        self.record_transcript = record_transcript

    # -- state management -------------------------------------------------

    def reset(self) -> "OnlineRecalibrator":
        """Discard all learned state and start a fresh stream."""
        if self.update_mode not in ("expected", "sampled"):
            raise ValueError(f"unknown update mode {self.update_mode!r}")
        check_seed(self.seed)
        self.grid_ = ProbabilityGrid(self.n_bins)
        self.instances_: dict[int, RegretMatchingCalibrator] = {}
        self.rngs_: dict[int, np.random.Generator] = {}
        self.routing_counts_ = np.zeros(self.n_bins, dtype=np.int64)
        self.ledger_expected_ = CalibrationLedger(self.grid_)
        self.ledger_sampled_ = CalibrationLedger(self.grid_)
        self.ledger_raw_ = CalibrationLedger(self.grid_)
        self.steps_ = 0
        self.pending_: _PendingStep | None = None
        self.emitted_: list[float] = []
        self.transcript_: list[dict] | None = [] if self.record_transcript else None
        return self

    def _ensure_state(self) -> None:
        if not hasattr(self, "steps_"):
            self.reset()

    def _check_fitted(self) -> None:
        if not hasattr(self, "steps_"):
            raise NotFittedError("recalibrator has no state yet; call fit or step first")

    def _instance(self, bucket: int) -> RegretMatchingCalibrator:
        if bucket not in self.instances_:
            self.instances_[bucket] = RegretMatchingCalibrator(self.grid_)
            self.rngs_[bucket] = np.random.default_rng(
                np.random.SeedSequence([check_seed(self.seed), bucket])
            )
        return self.instances_[bucket]

    # -- streaming protocol ------------------------------------------------

    def step(self, p_raw) -> float:
        """Route a raw forecast and emit the bucket calibrator's forecast."""
        self._ensure_state()
        if self.pending_ is not None:
            raise ProtocolOrderError("step called while a round is awaiting its outcome")
        p_raw = check_probability(p_raw, "raw forecast")
        bucket = bucket_index(p_raw, self.n_bins)
        state = self._instance(bucket)
        distribution = state.forecast_distribution()
        sampled = sample_forecast(distribution, self.rngs_[bucket])
        emitted = self.grid_.point(sampled)
        self.pending_ = _PendingStep(bucket, p_raw, distribution, sampled, emitted)
        return emitted

    def pending_expected_forecast(self) -> float:
        """Mean of the in-flight forecast distribution (what an adversary may see)."""
        if getattr(self, "pending_", None) is None:
            raise ProtocolOrderError("no round in flight")
        return float(self.pending_.distribution @ self.grid_.points())

    def observe(self, y) -> None:
        """Deliver the outcome for the in-flight round and update everything."""
        if getattr(self, "pending_", None) is None:
            raise ProtocolOrderError("observe called with no round in flight")
        y = check_outcome(y)
        pending = self.pending_
        state = self.instances_[pending.bucket]
        if self.update_mode == "expected":
            played = pending.distribution
        else:
            played = _one_hot(pending.sampled, self.grid_.n_points)
        state.update(played, pending.sampled, y)
        self.routing_counts_[pending.bucket] += 1
        one_hot = _one_hot(pending.sampled, self.grid_.n_points)
        # The raw stream is scored at its bucket's nominal grid value, the
        # same constant the framework's regret argument compares against.
        raw_hot = _one_hot(pending.bucket, self.grid_.n_points)
        self.ledger_expected_.add(pending.distribution, y, pending.emitted, pending.p_raw)
        self.ledger_sampled_.add(one_hot, y, pending.emitted, pending.p_raw)
        self.ledger_raw_.add(raw_hot, y, pending.p_raw, pending.p_raw)
        self.steps_ += 1
        if self.transcript_ is not None:
            self.transcript_.append(
                {
                    "t": self.steps_,
                    "bucket": pending.bucket,
                    "p_raw": pending.p_raw,
                    "distribution": pending.distribution.tolist(),
                    "sampled": pending.sampled,
                    "emitted": pending.emitted,
                    "y": y,
                }
            )
        self.pending_ = None

    # -- batch estimator surface --------------------------------------------

    def fit(self, P, y) -> "OnlineRecalibrator":
        """Reset, then replay a whole (raw forecast, outcome) stream online."""
        self.reset()
        return self.partial_fit(P, y)

    def partial_fit(self, P, y) -> "OnlineRecalibrator":
        """Continue the stream with more rounds, without resetting."""
        self._ensure_state()
        P = check_probability_array(np.ravel(P), "raw forecasts")
        y = check_outcome_array(y)
        if P.shape[0] != y.shape[0]:
            raise ValueError(f"length mismatch: {P.shape[0]} forecasts, {y.shape[0]} outcomes")
        for p_raw, outcome in zip(P, y):
            self.emitted_.append(self.step(p_raw))
            self.observe(int(outcome))
        return self

    def transform(self, P) -> np.ndarray:
        """Frozen recalibration map: expected forecast of each bucket, no updates."""
        self._check_fitted()
        P = check_probability_array(np.ravel(P), "raw forecasts")
        values = self.grid_.points()
        cold_value = self.grid_.point(self.grid_.nearest_index(0.5))
        out = np.empty_like(P)
        for idx, p_raw in enumerate(P):
            bucket = bucket_index(p_raw, self.n_bins)
            state = self.instances_.get(bucket)
            if state is None:
                out[idx] = cold_value
            else:
                out[idx] = float(state.forecast_distribution() @ values)
        return out

    # -- snapshots -----------------------------------------------------------

    def snapshot(self) -> str:
        """Serialize the complete state as deterministic JSON text.

        Only legal between rounds; an in-flight step is a protocol error.
        Round-tripping through :meth:`restore` is bit-exact.
        """
        self._check_fitted()
        if self.pending_ is not None:
            raise ProtocolOrderError("cannot snapshot while a round is awaiting its outcome")
        payload = {
            "schema": SNAPSHOT_SCHEMA,
            "version": SNAPSHOT_VERSION,
            "n_bins": self.n_bins,
            "seed": self.seed,
            "update_mode": self.update_mode,
            "steps": self.steps_,
            "routing_counts": self.routing_counts_.tolist(),
            "instances": {
                str(bucket): {
                    "state": self.instances_[bucket].to_dict(),
                    "rng_state": self.rngs_[bucket].bit_generator.state,
                }
                for bucket in sorted(self.instances_)
            },
            "ledgers": {
                "expected": self.ledger_expected_.to_dict(),
                "sampled": self.ledger_sampled_.to_dict(),
                "raw": self.ledger_raw_.to_dict(),
            },
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def restore(cls, text: str) -> "OnlineRecalibrator":
        """Rebuild a recalibrator from :meth:`snapshot` output."""
        payload = json.loads(text)
        if payload.get("schema") != SNAPSHOT_SCHEMA:
            raise ValueError(f"not a recalibrator snapshot: {payload.get('schema')!r}")
        if payload.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {payload.get('version')!r}")
        rec = cls(
            n_bins=payload["n_bins"],
            seed=payload["seed"],
            update_mode=payload["update_mode"],
        )
        rec.reset()
        rec.steps_ = int(payload["steps"])
        rec.routing_counts_ = np.asarray(payload["routing_counts"], dtype=np.int64)
        for key, entry in payload["instances"].items():
            bucket = int(key)
            rec.instances_[bucket] = RegretMatchingCalibrator.from_dict(entry["state"])
            rng = np.random.default_rng(0)
            rng.bit_generator.state = entry["rng_state"]
            rec.rngs_[bucket] = rng
        ledgers = payload["ledgers"]
        rec.ledger_expected_ = CalibrationLedger.from_dict(rec.grid_, ledgers["expected"])
        rec.ledger_sampled_ = CalibrationLedger.from_dict(rec.grid_, ledgers["sampled"])
        rec.ledger_raw_ = CalibrationLedger.from_dict(rec.grid_, ledgers["raw"])
        return rec
