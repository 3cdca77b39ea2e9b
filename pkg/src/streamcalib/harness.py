"""Experiment harness: synthetic streams, the protocol loop, and reports.

A run wires one data source (synthetic generator or stream file) through
the five-phase round: reveal covariates or expert forecasts, produce the
raw forecast, recalibrate it, reveal the outcome, update all learners.
Everything is deterministic given the run seed.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ProtocolOrderError, StreamFormatError
from .forecasters import ExpertAggregator, OnlineLogisticForecaster, clamp_probability
from .metrics import bucket_decomposition, calibration_error, l2_regret, reliability_bins
from .recalibrator import OnlineRecalibrator
from .validation import check_outcome, check_probability, check_seed

REPORT_SCHEMA_VERSION = 1
MODES = ("covariate", "forecast-stream", "multi-expert")

_NATURE_TAG = 1
_RECAL_TAG = 2


def derive_seed(base: int, tag: int) -> int:
    """Stable 64-bit child seed for an independent random stream."""
    return int(np.random.SeedSequence([check_seed(base), tag]).generate_state(1, np.uint64)[0])


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


# -- Nature generators ---------------------------------------------------


class IidBernoulli:
    """Constant raw forecast 0.5; outcomes i.i.d. Bernoulli(q)."""

    mode = "forecast-stream"
    adaptive = False

    def __init__(self, q: float = 0.5):
        self.q = check_probability(q, "bernoulli parameter")

    def reveal(self, t: int, rng) -> dict:
        return {"p": 0.5}

    def outcome(self, t: int, rng, expected_emitted=None) -> int:
        return int(rng.random() < self.q)


class MiscalibratedLink:
    """Gaussian covariate with a steep link the forecaster cannot match early.

    x = (z, 1) with z standard normal; y ~ Bernoulli(sigmoid(a*z + b)).
    """

    mode = "covariate"
    adaptive = False

    def __init__(self, a: float = 3.0, b: float = -0.5):
        self.a = float(a)
        self.b = float(b)
        self._latent: float | None = None

    def reveal(self, t: int, rng) -> dict:
        z = rng.standard_normal()
        self._latent = _sigmoid(self.a * z + self.b)
        return {"x": np.array([z, 1.0])}

    def outcome(self, t: int, rng, expected_emitted=None) -> int:
        return int(rng.random() < self._latent)


class SignFlipAdversary:
    """Outcome opposes the recalibrator's expected forecast for the round.

    The adversary reacts to the forecast distribution, never to the
    realized sample, so the calibration game stays the one with guarantees.
    Cannot be serialized to a stream file ahead of time.
    """

    mode = "forecast-stream"
    adaptive = True

    def reveal(self, t: int, rng) -> dict:
        return {"p": 0.5}

    def outcome(self, t: int, rng, expected_emitted=None) -> int:
        if expected_emitted is None:
            raise ValueError("sign-flip adversary needs the live expected forecast")
        return int(expected_emitted <= 0.5)


class Drifting:
    """Slowly oscillating outcome rate with a persistently overconfident forecast."""

    mode = "forecast-stream"
    adaptive = False

    def __init__(self, period: float = 5000.0):
        if period <= 0:
            raise ValueError(f"period must be positive, got {period}")
        self.period = float(period)
        self._latent: float | None = None

    def reveal(self, t: int, rng) -> dict:
        q = 0.5 + 0.35 * math.sin(2.0 * math.pi * t / self.period)
        self._latent = q
        return {"p": clamp_probability(_sigmoid(1.8 * _logit(q)))}

    def outcome(self, t: int, rng, expected_emitted=None) -> int:
        return int(rng.random() < self._latent)


class ExpertPanel:
    """K synthetic experts of varying quality around a hidden rate.

    Expert 0 forecasts the hidden rate exactly; expert 1 is the constant
    0.5; later experts alternate between overconfident distortions and
    additive-noise corruptions of the rate.
    """

    mode = "multi-expert"
    adaptive = False

    def __init__(self, n_experts: float = 4):
        self.n_experts = int(n_experts)
        if self.n_experts < 1:
            raise ValueError(f"need at least one expert, got {self.n_experts}")
        self._latent: float | None = None

    def reveal(self, t: int, rng) -> dict:
        q = rng.uniform(0.02, 0.98)
        self._latent = q
        forecasts = []
        for k in range(self.n_experts):
            if k == 0:
                forecasts.append(q)
            elif k == 1:
                forecasts.append(0.5)
            elif k % 2 == 0:
                forecasts.append(_sigmoid((1.5 + 0.5 * k) * _logit(q)))
            else:
                noisy = q + rng.normal(0.0, 0.25)
                forecasts.append(min(max(noisy, 0.001), 0.999))
        return {"experts": np.array(forecasts)}

    def outcome(self, t: int, rng, expected_emitted=None) -> int:
        return int(rng.random() < self._latent)


_GENERATORS = {
    "iid-bernoulli": IidBernoulli,
    "miscalibrated-link": MiscalibratedLink,
    "sign-flip": SignFlipAdversary,
    "drifting": Drifting,
    "expert-panel": ExpertPanel,
}


def generate_nature(kind_spec: str):
    """Instantiate a generator from 'name' or 'name:arg1,arg2' syntax."""
    name, _, arg_text = kind_spec.partition(":")
    name = name.strip()
    if name not in _GENERATORS:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(_GENERATORS)}")
    args = [float(a) for a in arg_text.split(",") if a.strip()] if arg_text else []
    return _GENERATORS[name](*args)


# -- configs and reports ----------------------------------------------------


@dataclass
class ExperimentConfig:
    mode: str
    n: int
    seed: int
    horizon: int | None = None
    generator: str | None = None
    input_path: str | None = None
    update_mode: str = "expected"
    forecaster_rate: float = 0.05
    forecaster_rule: str = "fixed"
    report_path: str | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if int(self.n) < 1:
            raise ValueError(f"resolution must be at least 1, got {self.n}")
        check_seed(self.seed)
        if (self.generator is None) == (self.input_path is None):
            raise ValueError("exactly one data source required: generator or input path")
        if self.generator is not None:
            if self.horizon is None or int(self.horizon) < 1:
                raise ValueError(f"horizon must be at least 1, got {self.horizon}")
            nature = generate_nature(self.generator)
            if nature.mode != self.mode:
                raise ValueError(
                    f"generator {self.generator!r} produces {nature.mode!r} rounds, "
                    f"config says {self.mode!r}"
                )
        if self.horizon is not None and int(self.horizon) < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if self.update_mode not in ("expected", "sampled"):
            raise ValueError(f"unknown update mode {self.update_mode!r}")
        if self.forecaster_rule not in ("fixed", "adaptive"):
            raise ValueError(f"unknown forecaster rule {self.forecaster_rule!r}")


@dataclass
class Report:
    config: dict
    metrics: dict
    wall_clock_seconds: float
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "Report":
        return cls(
            config=payload["config"],
            metrics=payload["metrics"],
            wall_clock_seconds=payload["wall_clock_seconds"],
            schema_version=payload["schema_version"],
        )

    def validate(self) -> None:
        def walk(value, path):
            if isinstance(value, dict):
                for key, sub in value.items():
                    walk(sub, f"{path}.{key}")
            elif isinstance(value, (list, tuple)):
                for idx, sub in enumerate(value):
                    walk(sub, f"{path}[{idx}]")
            elif isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"non-finite report field at {path}")

        walk(self.metrics, "metrics")
        for key in ("reliability_expected", "reliability_sampled"):
            rows = self.metrics[key]
            share_sum = sum(row[2] for row in rows)
            if abs(share_sum - 1.0) > 1e-9:
                raise ValueError(f"{key} shares sum to {share_sum}, expected 1")


# -- stream files ----------------------------------------------------


def _validate_row(row: dict, mode: str, line_number: int) -> dict:
    try:
        y = check_outcome(row["y"])
        if mode == "covariate":
            x = [float(v) for v in row["x"]]
            if not all(math.isfinite(v) for v in x):
                raise ValueError("covariates must be finite")
            return {"x": np.array(x), "y": y}
        if mode == "forecast-stream":
            return {"p": check_probability(row["p"], "raw forecast"), "y": y}
        values = [check_probability(v, "expert forecast") for v in row["p"]]
        return {"experts": np.array(values), "y": y}
    except (KeyError, TypeError, ValueError) as exc:
        raise StreamFormatError(line_number, str(exc)) from exc


def ingest_stream(path, mode: str, limit: int | None = None) -> list[dict]:
    """Read and validate a line-delimited stream file."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rows = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise StreamFormatError(line_number, f"invalid JSON: {exc}") from exc
            rows.append(_validate_row(raw, mode, line_number))
            if limit is not None and len(rows) == limit:
                break
    if limit is not None and len(rows) < limit:
        raise ValueError(f"stream {path} has only {len(rows)} rounds, needed {limit}")
    return rows


def write_stream(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            record = dict(row)
            if "x" in record:
                record["x"] = list(map(float, record["x"]))
            if "experts" in record:
                record["p"] = list(map(float, record.pop("experts")))
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def generate_stream(kind_spec: str, horizon: int, seed: int) -> list[dict]:
    """Materialize a generator's rounds so they can be written to a file."""
    nature = generate_nature(kind_spec)
    if nature.adaptive:
        raise ValueError(
            f"generator {kind_spec!r} adapts to the live forecaster and cannot be pre-generated"
        )
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    rng = np.random.default_rng(np.random.SeedSequence([check_seed(seed), _NATURE_TAG]))
    rows = []
    for t in range(horizon):
        payload = nature.reveal(t, rng)
        payload["y"] = nature.outcome(t, rng)
        rows.append(payload)
    return rows


# -- the protocol loop ----------------------------------------------------


def run_experiment(config: ExperimentConfig, return_state: bool = False):
    """Run the full recalibration protocol and measure everything.

    Returns the report, or ``(report, recalibrator)`` when the caller also
    needs the final state (for example to snapshot it).
    """
    config.validate()
    started = time.perf_counter()

    nature = generate_nature(config.generator) if config.generator is not None else None
    nature_rng = np.random.default_rng(
        np.random.SeedSequence([check_seed(config.seed), _NATURE_TAG])
    )
    rows = None
    horizon = int(config.horizon) if config.horizon is not None else None
    if config.input_path is not None:
        rows = ingest_stream(config.input_path, config.mode, limit=horizon)
        if not rows:
            raise ValueError(f"stream {config.input_path} is empty; need at least one round")
        horizon = len(rows)

    recalibrator = OnlineRecalibrator(
        n_bins=int(config.n),
        seed=derive_seed(config.seed, _RECAL_TAG),
        update_mode=config.update_mode,
    ).reset()

    forecaster = None
    aggregator = None
    expert_losses = None
    aggregate_loss = 0.0

    for t in range(horizon):
        try:
            if rows is not None:
                payload = rows[t]
            else:
                payload = nature.reveal(t, nature_rng)

            if config.mode == "covariate":
                x = payload["x"]
                if forecaster is None:
                    forecaster = OnlineLogisticForecaster(
                        dim=len(x),
                        learning_rate=config.forecaster_rate,
                        rule=config.forecaster_rule,
                    )
                p_raw = forecaster.predict_one(x)
            elif config.mode == "multi-expert":
                experts = payload["experts"]
                if aggregator is None:
                    aggregator = ExpertAggregator(n_experts=len(experts))
                    expert_losses = np.zeros(len(experts))
                p_raw = clamp_probability(aggregator.aggregate(experts))
            else:
                p_raw = clamp_probability(payload["p"])

            recalibrator.step(p_raw)

            if rows is not None:
                y = payload["y"]
            else:
                y = nature.outcome(t, nature_rng, recalibrator.pending_expected_forecast())
            recalibrator.observe(y)

            if config.mode == "covariate":
                forecaster.learn_one(x, y)
            elif config.mode == "multi-expert":
                expert_losses += (y - experts) ** 2
                aggregate_loss += (y - p_raw) ** 2
                aggregator.update(experts, y)
        except ProtocolOrderError as exc:
            raise ProtocolOrderError(f"round {t}: {exc}") from exc

    elapsed = time.perf_counter() - started
    report = build_report(recalibrator, config, elapsed,
                          expert_losses=expert_losses, aggregate_loss=aggregate_loss)
    if return_state:
        return report, recalibrator
    return report


def replay_experiment(snapshot_text: str, rows, config: ExperimentConfig) -> Report:
    """Restore a recalibrator snapshot and continue it over suffix rounds."""
    started = time.perf_counter()
    recalibrator = OnlineRecalibrator.restore(snapshot_text)
    for t, payload in enumerate(rows):
        try:
            recalibrator.step(clamp_probability(payload["p"]))
            recalibrator.observe(payload["y"])
        except ProtocolOrderError as exc:
            raise ProtocolOrderError(f"round {t}: {exc}") from exc
    elapsed = time.perf_counter() - started
    return build_report(recalibrator, config, elapsed)


def build_report(recalibrator: OnlineRecalibrator, config: ExperimentConfig,
                 elapsed: float, expert_losses=None, aggregate_loss: float = 0.0) -> Report:
    steps = recalibrator.steps_
    if steps == 0:
        raise ValueError("cannot report on a run with zero rounds")

    instances = []
    for bucket in sorted(recalibrator.instances_):
        state = recalibrator.instances_[bucket]
        instances.append(
            {
                "bucket": bucket,
                "steps": state.t,
                "internal_regret": state.internal_regret(),
                "external_regret_own": state.external_regret(bucket),
                "point_mass_gap": state.expected_point_mass_gap(),
            }
        )

    decomposition = [row._asdict() for row in bucket_decomposition(recalibrator)]
    expected = recalibrator.ledger_expected_
    sampled = recalibrator.ledger_sampled_
    raw = recalibrator.ledger_raw_

    metrics = {
        "steps": steps,
        "calibration_error_expected": calibration_error(expected),
        "calibration_error_sampled": calibration_error(sampled),
        "calibration_error_raw": calibration_error(raw),
        "l2_regret": l2_regret(expected),
        "mean_loss_emitted": expected.loss_emitted / steps,
        "mean_loss_raw": expected.loss_raw / steps,
        "max_internal_regret": max(row["internal_regret"] for row in instances),
        "max_point_mass_gap": max(row["point_mass_gap"] for row in instances),
        "routing_counts": recalibrator.routing_counts_.tolist(),
        "instances": instances,
        "decomposition": decomposition,
        "reliability_expected": [list(row) for row in reliability_bins(expected)],
        "reliability_sampled": [list(row) for row in reliability_bins(sampled)],
    }
    if expert_losses is not None:
        per_expert = (expert_losses / steps).tolist()
        metrics["experts"] = {
            "per_expert_mean_loss": per_expert,
            "aggregate_mean_loss": aggregate_loss / steps,
            "external_regret": aggregate_loss / steps - min(per_expert),
        }

    report = Report(config=asdict(config), metrics=metrics, wall_clock_seconds=elapsed)
    report.validate()
    return report


def emit_report(report: Report, path) -> None:
    """Write the report JSON plus a companion reliability CSV."""
    report.validate()
    path = Path(path)
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    csv_path = path.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["grid_value", "rho", "weight_share", "count"])
        for value, frequency, share, weight in report.metrics["reliability_sampled"]:
            writer.writerow([repr(value), repr(frequency), repr(share), int(weight)])


def load_report(path) -> Report:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return Report.from_dict(payload)
