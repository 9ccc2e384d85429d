"""Bayes classifier over candidate global charges."""
from __future__ import annotations

from collections.abc import Sequence
import logging
import math

import numpy as np
from scipy.special import logsumexp
from scipy.stats import entropy

from .const import (
    BACKEND_DENSE,
    BACKEND_MPS,
    DEFAULT_THRESHOLD,
    INIT_NEEL,
    INIT_NEEL_FLIP,
    INIT_PLUS,
    INIT_VECTOR_DICKE,
    INIT_VECTOR_MATCHED,
    UNBIASED_HOP,
)
from .exceptions import InconsistentRecord, InvalidArgument, MissingGateData
from .models import BiasMode, ClassificationOutcome, InitKind, MeasurementRecord
from .mps import ProbabilityMPS, evolve_mps_likelihood, reverse_evolve
from .sepmodel import HopSchedule, evolve_dense_likelihood

_LOGGER = logging.getLogger(__name__)


def bias_schedule(record: MeasurementRecord, mode: BiasMode | str) -> HopSchedule:
    """Hop probability per gate placement for the given knowledge level."""
    mode = BiasMode(mode)
    if mode is BiasMode.UNBIASED:
        return dict.fromkeys(record.layout.placements(), UNBIASED_HOP)
    if record.gates is None:
        raise MissingGateData(f"{mode} decoding needs the record's gate parameters")
    hops = record.gates.hops()
    if mode is BiasMode.ANTIBIASED:
        return {placement: 1.0 - hop for placement, hop in hops.items()}
    return hops


def label_kind(record: MeasurementRecord, label: int, init_vector: str = INIT_VECTOR_MATCHED) -> InitKind:
    """Initial classical vector used for candidate `label`."""
    kind = record.init_kind
    if init_vector == INIT_VECTOR_DICKE or kind.name not in (INIT_NEEL, INIT_NEEL_FLIP):
        return InitKind.dicke(label)
    if init_vector != INIT_VECTOR_MATCHED:
        raise InvalidArgument(f"Unknown init vector: {init_vector}")
    return kind.label_kind(record.n_sites, label)


def log_prior(record: MeasurementRecord, labels: Sequence[int]) -> np.ndarray:
    """Flat for fixed-charge tasks; binomial C(L, Q) / 2^L for the plus state."""
    if record.init_kind.name != INIT_PLUS:
        return np.zeros(len(labels))
    L = record.n_sites
    return np.array([math.log(math.comb(L, label)) - L * math.log(2.0) for label in labels])


def log_likelihoods(
    record: MeasurementRecord,
    labels: Sequence[int],
    mode: BiasMode | str = BiasMode.UNBIASED,
    backend: str = BACKEND_MPS,
    threshold: float = DEFAULT_THRESHOLD,
    init_vector: str = INIT_VECTOR_MATCHED,
) -> list[float]:
    mode = BiasMode(mode)
    hops = None if mode is BiasMode.UNBIASED else bias_schedule(record, mode)
    kinds = [label_kind(record, label, init_vector) for label in labels]
    if backend == BACKEND_DENSE:
        return [evolve_dense_likelihood(record, kind, hops) for kind in kinds]
    if backend == BACKEND_MPS:
        sectors: dict[int | None, ProbabilityMPS] = {}
        logs = []
        for kind in kinds:
            charge = kind.charge_for(record.n_sites)
            if charge not in sectors:
                sectors[charge] = reverse_evolve(record, hops, threshold, charge=charge)
            logs.append(evolve_mps_likelihood(record, kind, hops, threshold, sectors[charge]))
        return logs
    raise InvalidArgument(f"Unknown backend: {backend}")


def posterior(
    record: MeasurementRecord,
    labels: Sequence[int],
    mode: BiasMode | str = BiasMode.UNBIASED,
    backend: str = BACKEND_MPS,
    threshold: float = DEFAULT_THRESHOLD,
    init_vector: str = INIT_VECTOR_MATCHED,
) -> ClassificationOutcome:
    """P(Q | record) over `labels`; ties go to the smaller charge."""
    labels = list(labels)
    if not labels or len(set(labels)) != len(labels):
        raise InvalidArgument(f"Labels must be distinct and nonempty: {labels}")
    mode = BiasMode(mode)
    logs = log_likelihoods(record, labels, mode, backend, threshold, init_vector)
    joint = np.array(logs) + log_prior(record, labels)
    if np.all(np.isneginf(joint)):
        raise InconsistentRecord(f"Record {record.record_seed} has zero likelihood under every label {labels}")
    post = np.exp(joint - logsumexp(joint))
    post /= post.sum()
    best = float(post.max())
    predicted = min(label for label, value in zip(labels, post, strict=True) if value == best)
    return ClassificationOutcome(
        labels=labels,
        log_likelihoods=[float(value) for value in logs],
        posterior=[float(value) for value in post],
        predicted_label=predicted,
        bias_mode=mode,
        backend=backend,
        true_label=record.true_label,
        entropy_bits=float(entropy(post, base=2)),
    )


def evaluate_record(
    record: MeasurementRecord,
    labels: Sequence[int],
    mode: BiasMode | str = BiasMode.UNBIASED,
    backend: str = BACKEND_MPS,
    threshold: float = DEFAULT_THRESHOLD,
    init_vector: str = INIT_VECTOR_MATCHED,
) -> ClassificationOutcome:
    """Posterior plus P_corr for a record whose true label is known."""
    if record.true_label is None or record.true_label not in labels:
        raise InvalidArgument(f"True label {record.true_label} is not among {list(labels)}")
    outcome = posterior(record, labels, mode, backend, threshold, init_vector)
    return score_outcome(outcome, record.true_label)


def score_outcome(outcome: ClassificationOutcome, true_label: int) -> ClassificationOutcome:
    outcome.true_label = true_label
    outcome.p_corr = outcome.posterior[outcome.labels.index(true_label)]
    outcome.entropy_bits = float(entropy(outcome.posterior, base=2))
    return outcome


def naive_mean_estimator(record: MeasurementRecord, q0: int, q1: int) -> int:
    """Label nearest to L * (mean outcome); empty records and exact midpoints pick the smaller."""
    if q0 == q1:
        raise InvalidArgument("The two labels must differ")
    low, high = sorted((q0, q1))
    outcomes = record.outcomes()
    if not outcomes:
        return low
    estimate = record.n_sites * sum(outcomes) / len(outcomes)
    return high if abs(estimate - high) < abs(estimate - low) else low
