"""End-to-end tests across generation, decoding, percolation and analysis."""
from __future__ import annotations

import pytest

from chargelearn.cli import main
from chargelearn.const import (
    BACKEND_DENSE,
    BACKEND_MPS,
    CALIBRATION_FILE,
    EXIT_OK,
    EXIT_USAGE,
    MANIFEST_FILE,
    SUMMARY_FILE,
    TASK_ALL,
    TASK_PAIR,
)
from chargelearn.coordinator import decode_records, generate_records, percolate_records
from chargelearn.models import ExperimentConfig, InitKind
from chargelearn.storage import read_csv, read_json

PLAN = """
[sweep]
output_dir = "out"
master_seed = 21
sizes = [4, 6]
rates = [0.2, 0.5]
modes = ["unbiased", "biased"]
records_per_class = 3
timesteps = 3
engine = "sep"
backend = "dense"
boot = 20
"""


@pytest.mark.integration
class TestSweepCommand:
    """Test a small sweep through the command line."""

    def test_sweep_and_resume(self, tmp_path, monkeypatch, capsys):
        """Test the output tree and that a rerun recomputes nothing."""
        monkeypatch.delenv("CHARGELEARN_WORKERS", raising=False)
        plan = tmp_path / "plan.toml"
        plan.write_text(PLAN, encoding="utf-8")

        assert main(["-q", "sweep", str(plan)]) == EXIT_OK
        out = tmp_path / "out"
        manifest = read_json(out / MANIFEST_FILE)
        assert manifest["statistics"]["cells_done"] == 4
        assert manifest["statistics"]["sharpness_violations"] == 0
        assert len(manifest["seeds"]) == 4
        summary = read_csv(out / SUMMARY_FILE)
        assert {(row["L"], row["mode"]) for row in summary} == {
            ("4", "unbiased"),
            ("4", "biased"),
            ("6", "unbiased"),
            ("6", "biased"),
        }
        assert (out / CALIBRATION_FILE).exists()
        assert "4 cells computed" in capsys.readouterr().out

        assert main(["-q", "sweep", str(plan)]) == EXIT_OK
        assert "0 cells computed, 4 skipped, analysis skipped" in capsys.readouterr().out

    def test_bad_plan(self, tmp_path):
        """Test that an invalid plan is a usage error."""
        plan = tmp_path / "plan.toml"
        plan.write_text("[sweep]\nmaster_seed = 1\n", encoding="utf-8")
        assert main(["-q", "sweep", str(plan)]) == EXIT_USAGE


@pytest.mark.integration
class TestQuantumPipeline:
    """Test the quantum engine against both decoders and the percolation bound."""

    @pytest.fixture
    def records(self):
        config = ExperimentConfig(
            n_sites=6,
            n_timesteps=4,
            p=0.4,
            n_records=4,
            labels=[3, 2],
            init_kind=InitKind.dicke(3),
            master_seed=17,
        )
        return generate_records(config, TASK_PAIR)

    def test_backends_agree(self, records):
        """Test that dense and MPS posteriors coincide on small systems."""
        dense = decode_records(records, TASK_PAIR, backend=BACKEND_DENSE)
        mps = decode_records(records, TASK_PAIR, backend=BACKEND_MPS)
        for first, second in zip(dense, mps, strict=True):
            assert first.outcome.posterior == pytest.approx(second.outcome.posterior, abs=1e-6)
            if abs(first.outcome.posterior[0] - first.outcome.posterior[1]) > 1e-3:
                assert first.outcome.predicted_label == second.outcome.predicted_label

    def test_cut_implies_sharp_posterior(self, records):
        """Test that every record with a charge cut is decoded with certainty."""
        results = decode_records(records, TASK_PAIR, backend=BACKEND_DENSE)
        report = percolate_records(records, results, n_boot=20)
        assert report.sharpness_violations == 0
        for outcome, result in zip(report.outcomes, results, strict=True):
            if outcome.cut.exists:
                assert outcome.cut.extracted_charge == result.outcome.true_label
                assert result.outcome.p_corr == 1.0

    def test_all_charges_task(self):
        """Test decoding every charge from the product state."""
        config = ExperimentConfig(
            n_sites=4, n_timesteps=2, p=0.5, n_records=3, init_kind=InitKind("plus"), master_seed=2
        )
        records = generate_records(config, TASK_ALL)
        results = decode_records(records, TASK_ALL, backend=BACKEND_DENSE)
        for record, result in zip(records, results, strict=True):
            assert result.task == TASK_ALL
            assert result.outcome.labels == [0, 1, 2, 3, 4]
            assert result.outcome.true_label == record.true_label
            assert sum(result.outcome.posterior) == pytest.approx(1.0)
            assert result.naive_label is None
