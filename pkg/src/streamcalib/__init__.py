"""Streaming recalibration of online probability forecasts.

The package turns any stream of raw probability forecasts into calibrated
ones with vanishing extra squared loss: raw forecasts are routed into
equal-width buckets, each bucket runs an independent regret-matching
calibration subroutine over a shared grid, and the bucket's randomized
grid forecast is emitted in place of the raw value.
"""

from .calibrator import (
    RegretMatchingCalibrator,
    read_transcript,
    sample_forecast,
    write_transcript,
)
from .errors import (
    EmptyStateError,
    FixedPointError,
    ProtocolOrderError,
    StreamFormatError,
)
from .forecasters import ExpertAggregator, OnlineLogisticForecaster, clamp_probability
from .grid import ProbabilityGrid, bucket_index
from .harness import (
    ExperimentConfig,
    Report,
    derive_seed,
    emit_report,
    generate_nature,
    generate_stream,
    ingest_stream,
    load_report,
    replay_experiment,
    run_experiment,
    write_stream,
)
from .metrics import (
    CalibrationLedger,
    DecompositionRow,
    ReliabilityBin,
    bucket_decomposition,
    calibration_error,
    conditional_frequency,
    l2_regret,
    reliability_bins,
)
from .recalibrator import OnlineRecalibrator

__version__ = "0.1.0"

__all__ = [
    "CalibrationLedger",
    "DecompositionRow",
    "EmptyStateError",
    "ExperimentConfig",
    "ExpertAggregator",
    "FixedPointError",
    "OnlineLogisticForecaster",
    "OnlineRecalibrator",
    "ProbabilityGrid",
    "ProtocolOrderError",
    "RegretMatchingCalibrator",
    "ReliabilityBin",
    "Report",
    "StreamFormatError",
    "bucket_decomposition",
    "bucket_index",
    "calibration_error",
    "clamp_probability",
    "conditional_frequency",
    "derive_seed",
    "emit_report",
    "generate_nature",
    "generate_stream",
    "ingest_stream",
    "l2_regret",
    "load_report",
    "read_transcript",
    "reliability_bins",
    "replay_experiment",
    "run_experiment",
    "sample_forecast",
    "write_stream",
    "write_transcript",
]
