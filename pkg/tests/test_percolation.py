"""Unit tests for constraint propagation and charge cuts."""
from __future__ import annotations

import pytest

from chargelearn.const import BACKEND_DENSE
from chargelearn.core import build_layout, make_rng
from chargelearn.decoder import posterior
from chargelearn.exceptions import CorruptedRecord, InvalidArgument
from chargelearn.models import InitKind
from chargelearn.percolation import (
    KnownValueGrid,
    Provenance,
    find_charge_cut,
    percolate_record,
    percolation_summary,
    propagate_constraints,
)
from chargelearn.sepmodel import all_placements, sample_record_from_model


class TestKnownValueGrid:
    """Test the segment grid."""

    def test_segments(self):
        """Test segment counting and lookup."""
        grid = KnownValueGrid.empty(build_layout(4, 2))
        assert grid.n_segments(0) == 3
        assert grid.n_segments(1) == 5
        assert grid.segment_after(0, 0) == 1
        assert grid.segment_after(0, 1) == 1
        assert grid.segment_after(1, 1) == 2

    def test_assign_conflict(self):
        """Test that contradictory values raise."""
        grid = KnownValueGrid.empty(build_layout(2, 1))
        assert grid.assign((0, 1), 1, Provenance.MEASURED)
        assert not grid.assign((0, 1), 1, Provenance.INFERRED)
        with pytest.raises(CorruptedRecord):
            grid.assign((0, 1), 0, Provenance.INFERRED)

    def test_gate_legs(self):
        """Test the legs of the first gates."""
        gates = KnownValueGrid.empty(build_layout(4, 1)).gates()
        assert [(gate.half_layer, gate.left) for gate in gates] == [(0, 0), (0, 2), (1, 1)]
        assert gates[2].in_left == (1, 1)
        assert gates[2].out_right == (2, 2)


class TestPropagateConstraints:
    """Test charge-conservation inference."""

    def test_empty_record(self, make_record):
        """Test that nothing is inferred without measurements."""
        grid = propagate_constraints(make_record(4, 2, label=2))
        assert grid.n_measured == 0
        assert grid.n_inferred == 0

    def test_full_outputs_fix_inputs(self, make_record):
        """Test that two occupied outputs force two occupied inputs."""
        grid = propagate_constraints(make_record(2, 1, events=[(0, 0, 1), (0, 1, 1)], label=2))
        assert grid.value(0, 0) == 1
        assert grid.value(1, 0) == 1
        assert grid.provenance[(0, 0)] is Provenance.INFERRED
        assert grid.n_inferred == 2

    def test_three_legs_determine_fourth(self, make_record):
        """Test the three-known rule across a gate."""
        # inputs of the round-2 gate are the round-0 outputs
        record = make_record(2, 2, events=[(0, 0, 1), (0, 1, 0), (2, 0, 1)], label=1)
        grid = propagate_constraints(record)
        assert grid.value(1, 2) == 0
        assert grid.provenance[(1, 2)] is Provenance.INFERRED

    def test_idle_rounds_share_a_segment(self, make_record):
        """Test that a value persists across rounds without gates."""
        grid = propagate_constraints(make_record(2, 2, events=[(0, 0, 1), (1, 0, 1)], label=1))
        assert grid.n_measured == 1

    def test_conservation_violation(self, make_record):
        """Test that an impossible gate raises."""
        record = make_record(2, 2, events=[(0, 0, 1), (0, 1, 1), (2, 0, 0), (2, 1, 0)], label=2)
        with pytest.raises(CorruptedRecord):
            propagate_constraints(record)

    def test_fixpoint_ignores_gate_order(self, mocker):
        """Test that any gate order in the work-list reaches the same values and provenance."""
        rng = make_rng(44)
        records = [sample_record_from_model(6, 6, 0.4, 3, rng)[0] for _ in range(20)]
        expected = [propagate_constraints(record) for record in records]
        assert sum(grid.n_inferred for grid in expected) > 0

        original = KnownValueGrid.gates
        order = make_rng(45)

        def shuffled(grid):
            gates = original(grid)
            return [gates[index] for index in order.permutation(len(gates))]

        mocker.patch.object(KnownValueGrid, "gates", shuffled)
        for record, reference in zip(records, expected, strict=True):
            for _ in range(3):
                grid = propagate_constraints(record)
                assert grid.values == reference.values
                assert grid.provenance == reference.provenance

    def test_inferred_values_match_trajectory(self):
        """Test soundness against ground-truth exclusion-process trajectories."""
        rng = make_rng(31)
        for _ in range(40):
            record, trajectory = sample_record_from_model(6, 6, 0.35, 3, rng, with_trajectory=True)
            grid = propagate_constraints(record)
            for (site, segment), value in grid.values.items():
                rounds = grid.gate_rounds[site]
                # row tau + 1 is the state after half-layer tau; segment 0 is the initial row
                row = 0 if segment == 0 else rounds[segment - 1] + 1
                assert trajectory[row, site] == value


class TestFindChargeCut:
    """Test space-like cut detection."""

    def test_empty_record(self, make_record):
        """Test that no data gives no cut."""
        grid = propagate_constraints(make_record(4, 2, label=2))
        assert not find_charge_cut(grid).exists

    def test_full_round(self, make_record):
        """Test that a fully measured round is a cut carrying the charge."""
        record = make_record(4, 2, events=[(1, 0, 1), (1, 1, 0), (1, 2, 1), (1, 3, 0)], label=2)
        cut = find_charge_cut(propagate_constraints(record))
        assert cut.exists
        assert cut.extracted_charge == 2
        assert cut.cut_times == (1, 2, 2, 1)

    def test_partial_round(self, make_record):
        """Test that one unmeasured site breaks the cut."""
        record = make_record(4, 1, events=[(0, 0, 1), (0, 1, 0), (0, 2, 1)], label=2)
        assert not find_charge_cut(propagate_constraints(record)).exists

    def test_staggered_cut(self, make_record):
        """Test a cut through different rounds that no gate straddles."""
        # site 0 is read before the odd half-layer, which never touches it
        record = make_record(4, 2, events=[(0, 0, 1), (1, 1, 0), (1, 2, 1), (1, 3, 0)], label=2)
        cut = find_charge_cut(propagate_constraints(record))
        assert cut.exists
        assert cut.cut_times == (1, 2, 2, 1)
        assert cut.extracted_charge == 2

    def test_straddled_gate(self, make_record):
        """Test that a gate between the two halves of a candidate cut blocks it."""
        record = make_record(4, 1, events=[(0, 2, 1), (0, 3, 0), (1, 0, 0), (1, 1, 1)], label=2)
        assert not find_charge_cut(propagate_constraints(record)).exists

    def test_layout_mismatch(self, make_record):
        """Test that the layout must match the grid."""
        grid = propagate_constraints(make_record(4, 1, label=2))
        with pytest.raises(InvalidArgument):
            find_charge_cut(grid, build_layout(4, 2))

    def test_cut_charge_equals_label(self):
        """Test charge extraction on sampled records."""
        rng = make_rng(7)
        found = 0
        for index in range(200):
            record, _ = sample_record_from_model(6, 6, 0.5, 2 + index % 2, rng)
            outcome = percolate_record(record)
            if outcome.cut.exists:
                found += 1
                assert outcome.cut_charge_matches_label
        assert found > 0

    def test_cut_implies_sharp_posterior(self):
        """Test that a cut leaves zero posterior on the wrong label."""
        rng = make_rng(12)
        for index in range(60):
            label = 2 + index % 2
            record, _ = sample_record_from_model(6, 4, 0.5, label, rng)
            if percolate_record(record).cut.exists:
                outcome = posterior(record, [2, 3], backend=BACKEND_DENSE)
                assert outcome.posterior[[2, 3].index(5 - label)] == 0.0

    def test_adding_events_keeps_cut(self):
        """Test monotonicity in the measurement set."""
        layout = build_layout(4, 2)
        rng = make_rng(5)
        record, _ = sample_record_from_model(4, 2, 0.0, 2, rng, placements={(1, site) for site in range(4)})
        richer, _ = sample_record_from_model(4, 2, 0.0, 2, rng, placements=all_placements(layout))
        assert percolate_record(record).cut.exists
        assert percolate_record(richer).cut.exists


class TestPercolationSummary:
    """Test the per-(L, p) summary."""

    @pytest.mark.parametrize(("p", "fraction"), [(1.0, 1.0), (0.0, 0.0)])
    def test_extremes(self, p, fraction):
        """Test full and empty measurement."""
        rng = make_rng(2)
        records = [sample_record_from_model(4, 4, p, 2, rng)[0] for _ in range(10)]
        (row,) = percolation_summary(records, n_boot=50)
        assert row.fraction == fraction
        assert row.n_records == 10
        if p == 1.0:
            assert row.match_rate == 1.0
        else:
            assert row.match_rate is None

    def test_groups_by_size_and_rate(self):
        """Test one row per (L, p)."""
        rng = make_rng(3)
        records = [
            sample_record_from_model(size, 2, p, InitKind.dicke(1), rng)[0] for size in (4, 6) for p in (0.2, 0.6)
        ]
        rows = percolation_summary(records, n_boot=20)
        assert [(row.n_sites, row.p) for row in rows] == [(4, 0.2), (4, 0.6), (6, 0.2), (6, 0.6)]

    def test_empty(self):
        """Test that an empty input raises."""
        with pytest.raises(InvalidArgument):
            percolation_summary([])
