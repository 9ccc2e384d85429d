"""Tests for the chargelearn command line."""
from __future__ import annotations

import json

import pytest

from chargelearn.cli import build_parser, main
from chargelearn.const import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, SUMMARY_FILE
from chargelearn.storage import file_sha256, read_csv


GENERATE = ["-q", "generate", "--engine", "sep", "--L", "4", "--p", "0.3", "--n", "4", "--seed", "9"]


@pytest.fixture(autouse=True)
def _single_worker(monkeypatch):
    monkeypatch.delenv("CHARGELEARN_WORKERS", raising=False)


@pytest.fixture
def records_file(tmp_path):
    path = tmp_path / "records.jsonl"
    code = main([*GENERATE, "--out", str(path)])
    assert code == EXIT_OK
    return path


class TestParser:
    """Test argument parsing."""

    @pytest.mark.parametrize("value", ["1.5", "-0.1", "half"])
    def test_invalid_rate(self, value):
        """Test that a bad --p exits with the usage code."""
        with pytest.raises(SystemExit) as exit_info:
            build_parser().parse_args(["generate", "--L", "4", "--p", value, "--n", "1", "--out", "x"])
        assert exit_info.value.code == EXIT_USAGE

    def test_label_spec(self):
        """Test named and explicit decode label sets."""
        parser = build_parser()
        assert parser.parse_args(["decode", "--records", "r", "--out", "o"]).labels == "pair"
        assert parser.parse_args(["decode", "--records", "r", "--out", "o", "--labels", "1,3"]).labels == [1, 3]


class TestGenerateAndDecode:
    """Test the record pipeline."""

    def test_generate(self, records_file, capsys):
        """Test the record file and the report line."""
        lines = records_file.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 8
        assert json.loads(lines[0])["L"] == 4
        assert "Wrote 8 records" in capsys.readouterr().out

    def test_generate_deterministic(self, records_file, tmp_path):
        """Test byte-identical output for the same seed."""
        again = tmp_path / "again.jsonl"
        main([*GENERATE, "--out", str(again)])
        assert file_sha256(again) == file_sha256(records_file)

    def test_decode(self, records_file, tmp_path, capsys):
        """Test decoding on the dense backend."""
        out = tmp_path / "results.jsonl"
        code = main(["-q", "decode", "--records", str(records_file), "--backend", "dense", "--out", str(out)])
        assert code == EXIT_OK
        rows = [json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()]
        assert len(rows) == 8
        assert all(row["labels"] == [1, 2] for row in rows)
        assert "Decoded 8 records" in capsys.readouterr().out

    def test_plus_records_default_labels(self, tmp_path):
        """Test that plus-state records decode over every charge without --labels."""
        records = tmp_path / "plus.jsonl"
        generate = ["-q", "generate", "--engine", "sep", "--init", "plus", "--L", "6", "--tf", "6", "--p", "0.2"]
        assert main([*generate, "--n", "40", "--seed", "3", "--out", str(records)]) == EXIT_OK
        out = tmp_path / "results.jsonl"
        code = main(["-q", "decode", "--records", str(records), "--backend", "dense", "--out", str(out)])
        assert code == EXIT_OK
        rows = [json.loads(line) for line in out.read_text(encoding="utf-8").splitlines()]
        assert len(rows) == 40
        for row in rows:
            assert row["labels"] == list(range(7))
            assert row["task"] == "all"
            assert row["label"] in row["labels"]
            assert row["naive"] is None

    def test_biased_without_gates(self, records_file, tmp_path):
        """Test that biased decoding of gate-free records is a data error."""
        out = tmp_path / "results.jsonl"
        code = main(["-q", "decode", "--records", str(records_file), "--mode", "biased", "--out", str(out)])
        assert code == EXIT_DATA
        assert not out.exists()

    def test_missing_records(self, tmp_path):
        """Test that a missing input is an I/O error."""
        code = main(["-q", "decode", "--records", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "o.jsonl")])
        assert code == EXIT_IO

    def test_invalid_labels(self, tmp_path):
        """Test that invalid experiment parameters are usage errors."""
        args = ["-q", "generate", "--L", "4", "--p", "0.3", "--n", "1", "--labels", "7,2"]
        code = main([*args, "--out", str(tmp_path / "r")])
        assert code == EXIT_USAGE


class TestAnalyzeAndPercolate:
    """Test the downstream commands."""

    def test_analyze(self, records_file, tmp_path):
        """Test summary tables from a results file."""
        results = tmp_path / "results.jsonl"
        main(["-q", "decode", "--records", str(records_file), "--backend", "dense", "--out", str(results)])
        out_dir = tmp_path / "analysis"
        code = main(
            ["-q", "analyze", "--results", str(results), "--boot", "20", "--no-plots", "--out-dir", str(out_dir)]
        )
        assert code == EXIT_OK
        (row,) = read_csv(out_dir / SUMMARY_FILE)
        assert row["n_samples"] == "8"
        assert not (out_dir / "plots").exists()

    def test_analyze_bad_grouping(self, records_file, tmp_path):
        """Test that grouping without p is rejected."""
        results = tmp_path / "results.jsonl"
        main(["-q", "decode", "--records", str(records_file), "--backend", "dense", "--out", str(results)])
        code = main(["-q", "analyze", "--results", str(results), "--group-by", "L", "--out-dir", str(tmp_path / "a")])
        assert code == EXIT_USAGE

    def test_percolate(self, records_file, tmp_path, capsys):
        """Test the percolation tables."""
        results = tmp_path / "results.jsonl"
        main(["-q", "decode", "--records", str(records_file), "--backend", "dense", "--out", str(results)])
        out = tmp_path / "percolation.csv"
        code = main(["-q", "percolate", "--records", str(records_file), "--results", str(results), "--boot", "20",
                     "--out", str(out)])
        assert code == EXIT_OK
        assert len(read_csv(out)) == 8
        assert len(read_csv(tmp_path / "percolation_summary.csv")) == 1
        assert "cut fraction" in capsys.readouterr().out


class TestVerify:
    """Test the verification commands."""

    def test_enumeration(self, capsys):
        """Test that enumerated probabilities sum to one."""
        assert main(["-q", "verify", "enumeration", "--L", "4", "--tf", "1"]) == EXIT_OK
        assert "Q=2" in capsys.readouterr().out

    def test_haar_average(self):
        """Test the doubled channel with a loose tolerance."""
        assert main(["-q", "verify", "haar-average", "--n", "2000", "--tolerance", "1.0"]) == EXIT_OK

    def test_haar_average_failure(self):
        """Test that an impossible tolerance fails verification."""
        assert main(["-q", "verify", "haar-average", "--n", "200", "--tolerance", "1e-12"]) == EXIT_VERIFY

    @pytest.mark.slow
    def test_born_equivalence(self):
        """Test the averaged quantum probability on a two-site chain."""
        code = main(["-q", "verify", "born-equivalence", "--L", "2", "--tf", "1", "--p", "0.5", "--n", "4000"])
        assert code == EXIT_OK
