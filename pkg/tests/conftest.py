"""Pytest configuration for chargelearn tests."""
from __future__ import annotations

from collections.abc import Callable, Iterable

import pytest

from chargelearn.const import ENGINE_SEP, TASK_PAIR
from chargelearn.coordinator import generate_records
from chargelearn.core import build_layout
from chargelearn.models import (
    BiasMode,
    ClassificationOutcome,
    DecodeResult,
    ExperimentConfig,
    InitKind,
    MeasurementEvent,
    MeasurementRecord,
)


@pytest.fixture
def make_record() -> Callable[..., MeasurementRecord]:
    """Return a factory for records from (round, site, outcome) triples."""

    def _make(
        n_sites: int,
        n_timesteps: int,
        events: Iterable[tuple[int, int, int]] = (),
        kind: InitKind | None = None,
        label: int | None = None,
        seed: int = 0,
        p: float | None = None,
    ) -> MeasurementRecord:
        return MeasurementRecord(
            layout=build_layout(n_sites, n_timesteps),
            events=tuple(MeasurementEvent(*event) for event in sorted(events)),
            init_kind=kind or InitKind.dicke(label if label is not None else n_sites // 2),
            true_label=label,
            record_seed=seed,
            p=p,
        )

    return _make


@pytest.fixture
def make_result() -> Callable[..., DecodeResult]:
    """Return a factory for two-label decode results with a given posterior."""

    def _make(
        posterior: tuple[float, float],
        true_label: int = 2,
        n_sites: int = 4,
        p: float = 0.2,
        mode: BiasMode = BiasMode.UNBIASED,
        seed: int = 0,
        naive: int | None = None,
        n_timesteps: int | None = None,
    ) -> DecodeResult:
        labels = [n_sites // 2 - 1, n_sites // 2]
        best = max(posterior)
        predicted = min(label for label, value in zip(labels, posterior, strict=True) if value == best)
        outcome = ClassificationOutcome(
            labels=labels,
            log_likelihoods=[-1.0, -1.0],
            posterior=list(posterior),
            predicted_label=predicted,
            bias_mode=mode,
            true_label=true_label,
            p_corr=posterior[labels.index(true_label)],
            entropy_bits=0.0,
        )
        return DecodeResult(
            record_seed=seed,
            n_sites=n_sites,
            n_timesteps=n_timesteps or n_sites,
            p=p,
            init_kind=InitKind.dicke(true_label),
            task=TASK_PAIR,
            outcome=outcome,
            naive_label=naive,
        )

    return _make


@pytest.fixture
def sep_config() -> ExperimentConfig:
    """Return a small pair-task experiment."""
    return ExperimentConfig(
        n_sites=4,
        n_timesteps=4,
        p=0.3,
        n_records=6,
        labels=[2, 1],
        init_kind=InitKind.dicke(2),
        master_seed=11,
    )


@pytest.fixture
def sep_records(sep_config):
    """Return records sampled from the exclusion-process model."""
    return generate_records(sep_config, TASK_PAIR, ENGINE_SEP)


@pytest.fixture
def gated_records():
    """Return quantum records that carry their gate parameters."""
    config = ExperimentConfig(
        n_sites=4,
        n_timesteps=3,
        p=0.3,
        n_records=3,
        labels=[2, 1],
        init_kind=InitKind.dicke(2),
        master_seed=5,
        with_gates=True,
    )
    return generate_records(config, TASK_PAIR)
