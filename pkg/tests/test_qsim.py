"""Unit tests for the statevector simulator."""
from __future__ import annotations

from dataclasses import replace
import math

import numpy as np
import pytest
from scipy.stats import binom, chisquare

from chargelearn.core import build_layout, derive_stream_seed
from chargelearn.exceptions import InvalidArgument
from chargelearn.models import IDENTITY_GATE, SWAP_LIKE_GATE, ExperimentConfig, InitKind, MeasurementEvent
from chargelearn.qsim import (
    QuantumState,
    apply_gate,
    basis_charges,
    born_probability,
    init_state,
    measure_global_charge,
    measure_site,
    neel_index,
    run_trajectory,
    sample_haar_u1_gate,
    sample_realization,
    sector_weights,
)


class TestInitState:
    """Test initial states."""

    def test_dicke_is_uniform_in_sector(self):
        """Test that dicke(Q) spreads evenly over charge Q."""
        state = init_state(4, InitKind.dicke(2))
        assert state.norm_squared() == pytest.approx(1.0)
        weights = sector_weights(state)
        assert weights[2] == pytest.approx(1.0)
        nonzero = np.abs(state.amplitudes[basis_charges(4) == 2]) ** 2
        np.testing.assert_allclose(nonzero, 1.0 / math.comb(4, 2))

    def test_neel_occupies_site_zero(self):
        """Test the Neel bitstring convention."""
        assert neel_index(4) == 0b1010
        assert neel_index(4, flipped=True) == 0b0010
        state = init_state(4, InitKind("neel"))
        assert state.amplitudes[0b1010] == 1.0

    def test_plus_is_binomial(self):
        """Test the charge distribution of the plus state."""
        weights = sector_weights(init_state(6, InitKind("plus")))
        expected = [math.comb(6, q) / 64 for q in range(7)]
        np.testing.assert_allclose(weights, expected)

    def test_too_many_sites(self):
        """Test the statevector guard."""
        with pytest.raises(InvalidArgument):
            init_state(40, InitKind.dicke(1))


class TestGatesAndMeasurement:
    """Test gate application and collapse."""

    def test_swap_moves_particle(self):
        """Test that xi=1 moves a particle across the bond."""
        state = QuantumState(np.zeros(4, dtype=np.complex128), 2)
        state.amplitudes[0b10] = 1.0
        apply_gate(state, 0, SWAP_LIKE_GATE)
        assert abs(state.amplitudes[0b01]) == pytest.approx(1.0)

    def test_gate_preserves_norm_and_charge(self):
        """Test unitarity and charge conservation of a random gate."""
        rng = np.random.default_rng(1)
        state = init_state(5, InitKind.dicke(2))
        realization = sample_realization(build_layout(5, 2), rng)
        for (_, left), gate in realization.gates.items():
            apply_gate(state, left, gate)
        assert state.norm_squared() == pytest.approx(1.0)
        assert sector_weights(state)[2] == pytest.approx(1.0)

    def test_measure_site_collapses(self):
        """Test that a measured site holds its outcome afterwards."""
        rng = np.random.default_rng(4)
        state = init_state(4, InitKind.dicke(2))
        outcome, state = measure_site(state, 1, rng)
        again, _ = measure_site(state, 1, rng)
        assert outcome == again
        assert state.norm_squared() == pytest.approx(1.0)

    def test_measure_global_charge(self):
        """Test projection of the plus state onto one sector."""
        rng = np.random.default_rng(9)
        charge, state = measure_global_charge(init_state(4, InitKind("plus")), rng)
        assert sector_weights(state)[charge] == pytest.approx(1.0)

    def test_haar_gate_is_u1(self):
        """Test the Haar-sampled gate's block structure."""
        unitary = sample_haar_u1_gate(np.random.default_rng(2))
        np.testing.assert_allclose(unitary.conj().T @ unitary, np.eye(4), atol=1e-12)
        assert unitary[0, 1] == 0 and unitary[3, 2] == 0


class TestRunTrajectory:
    """Test record generation."""

    def test_deterministic(self):
        """Test that a seed fixes the record."""
        config = ExperimentConfig(n_sites=6, n_timesteps=6, p=0.3, init_kind=InitKind.dicke(3))
        first, _, _ = run_trajectory(config, 123)
        second, _, _ = run_trajectory(config, 123)
        assert first == second

    def test_full_measurement_reads_charge(self):
        """Test that measuring every site returns the label's charge each round."""
        config = ExperimentConfig(n_sites=4, n_timesteps=2, p=1.0, init_kind=InitKind.dicke(1))
        record, _, _ = run_trajectory(config, 5)
        for events in record.events_by_round().values():
            assert sum(event.outcome for event in events) == 1
        assert record.true_label == 1

    def test_plus_state_measures_label(self):
        """Test the terminal charge measurement of the plus state."""
        config = ExperimentConfig(n_sites=4, n_timesteps=2, p=0.0, init_kind=InitKind("plus"))
        record, _, state = run_trajectory(config, 8)
        assert record.true_label is not None
        assert sector_weights(state)[record.true_label] == pytest.approx(1.0)

    def test_gates_attached_only_on_request(self):
        """Test the with_gates flag."""
        config = ExperimentConfig(n_sites=4, n_timesteps=2, p=0.2, init_kind=InitKind.dicke(2))
        record, realization, _ = run_trajectory(config, 1)
        assert record.gates is None
        assert len(realization.gates) == build_layout(4, 2).gate_count
        gated, _, _ = run_trajectory(replace(config, with_gates=True), 1)
        assert gated.gates == realization
        assert gated.events == record.events

    def test_gate_hook(self):
        """Test fixed gates through the hook."""
        config = ExperimentConfig(n_sites=4, n_timesteps=1, p=0.0, init_kind=InitKind.dicke(2))
        _, realization, _ = run_trajectory(config, 3, gate_hook=lambda tau, left: IDENTITY_GATE)
        assert set(realization.gates.values()) == {IDENTITY_GATE}


class TestBornProbability:
    """Test the unnormalised record probability."""

    def test_empty_record_has_probability_one(self, make_record):
        """Test that no measurements leave the full norm."""
        record = make_record(4, 1, label=2)
        realization = sample_realization(record.layout, np.random.default_rng(0))
        assert born_probability(record, realization, InitKind.dicke(2)) == pytest.approx(1.0)

    def test_impossible_outcome(self, make_record):
        """Test that a record contradicting the charge has probability zero."""
        record = make_record(2, 1, events=[(0, 0, 1), (0, 1, 1)], label=1)
        realization = sample_realization(record.layout, np.random.default_rng(0))
        assert born_probability(record, realization, InitKind.dicke(1)) == 0.0

    def test_identity_circuit(self, make_record):
        """Test a hand-computable case: dicke(1) on two sites under the identity."""
        record = make_record(2, 1, events=[(0, 0, 1)], label=1)
        layout = record.layout
        realization = sample_realization(layout, np.random.default_rng(0))
        realization.gates[(0, 0)] = IDENTITY_GATE
        assert born_probability(record, realization, InitKind.dicke(1)) == pytest.approx(0.5)


class TestBornStatistics:
    """Test Born-rule sampling frequencies."""

    def test_measure_site_frequency(self):
        """Test that a plus-state site reads 1 half of the time."""
        rng = np.random.default_rng(17)
        ones = sum(measure_site(init_state(2, InitKind("plus")), 0, rng)[0] for _ in range(10_000))
        assert ones / 10_000 == pytest.approx(0.5, abs=0.02)

    def test_global_charge_is_binomial(self):
        """Test the sampled plus-state charge against Binomial(4, 1/2)."""
        rng = np.random.default_rng(23)
        n_draws = 10_000
        charges = [measure_global_charge(init_state(4, InitKind("plus")), rng)[0] for _ in range(n_draws)]
        observed = np.bincount(charges, minlength=5)
        expected = n_draws * binom.pmf(np.arange(5), 4, 0.5)
        assert chisquare(observed, expected).pvalue > 1e-3


class TestEventCounts:
    """Test the number of measurement events per record."""

    @pytest.mark.parametrize(("p", "expected"), [(1.0, 2 * 3 * 4), (0.0, 0)])
    def test_extreme_rates(self, p, expected):
        """Test that p=1 measures every site each half-layer and p=0 none."""
        config = ExperimentConfig(n_sites=4, n_timesteps=3, p=p, init_kind=InitKind.dicke(2))
        for index in range(5):
            record, _, _ = run_trajectory(config, derive_stream_seed(7, index))
            assert len(record.events) == expected

    def test_mean_count(self):
        """Test that the mean event count matches 2 p t_f L within three standard errors."""
        n_sites, n_timesteps, p, n_records = 4, 2, 0.3, 400
        config = ExperimentConfig(n_sites=n_sites, n_timesteps=n_timesteps, p=p, init_kind=InitKind.dicke(2))
        counts = [len(run_trajectory(config, derive_stream_seed(19, index))[0].events) for index in range(n_records)]
        coins = 2 * n_timesteps * n_sites
        sigma = math.sqrt(coins * p * (1.0 - p) / n_records)
        assert abs(np.mean(counts) - coins * p) < 3.0 * sigma

    def test_identity_neel_example(self):
        """Test the four events of a fully measured two-site Neel circuit with identity gates."""
        config = ExperimentConfig(n_sites=2, n_timesteps=1, p=1.0, init_kind=InitKind("neel"))
        record, _, _ = run_trajectory(config, 0, gate_hook=lambda tau, left: IDENTITY_GATE)
        assert record.events == (
            MeasurementEvent(0, 0, 1),
            MeasurementEvent(0, 1, 0),
            MeasurementEvent(1, 0, 1),
            MeasurementEvent(1, 1, 0),
        )
        assert record.true_label == 1
