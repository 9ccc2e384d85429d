"""Measurement records of monitored U(1) circuits and the charge decoders that read them."""
from __future__ import annotations

from .decoder import evaluate_record, naive_mean_estimator, posterior
from .exceptions import ChargeLearnError
from .models import (
    BiasMode,
    CircuitLayout,
    CircuitRealization,
    ClassificationOutcome,
    DecodeResult,
    ExperimentConfig,
    GateParams,
    InitKind,
    MeasurementEvent,
    MeasurementRecord,
)

__version__ = "1.0.0"

__all__ = [
    "BiasMode",
    "ChargeLearnError",
    "CircuitLayout",
    "CircuitRealization",
    "ClassificationOutcome",
    "DecodeResult",
    "ExperimentConfig",
    "GateParams",
    "InitKind",
    "MeasurementEvent",
    "MeasurementRecord",
    "__version__",
    "evaluate_record",
    "naive_mean_estimator",
    "posterior",
]
