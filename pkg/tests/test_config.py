"""Tests for sweep plans and schema validation."""
from __future__ import annotations

from pathlib import Path

import pytest

from chargelearn.config import (
    PLAN_SCHEMA,
    RECORD_SCHEMA,
    SweepCell,
    SweepPlan,
    default_workers,
    load_plan,
    validate,
)
from chargelearn.const import BACKEND_MPS, DEFAULT_THRESHOLD, ENGINE_QUANTUM, ENV_WORKERS, INIT_PLUS, TASK_ALL
from chargelearn.exceptions import InvalidArgument
from chargelearn.models import BiasMode

PLAN = """
[sweep]
output_dir = "runs/small"
master_seed = 7
sizes = [6, 4, 4]
rates = [0.3, 0.1]
records_per_class = 5
"""


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "plan.toml"
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def _no_worker_env(monkeypatch):
    monkeypatch.delenv(ENV_WORKERS, raising=False)


class TestLoadPlan:
    """Test TOML plan loading."""

    def test_defaults(self, tmp_path):
        """Test the defaults of a minimal plan."""
        plan = load_plan(_write(tmp_path, PLAN))
        assert plan.output_dir == tmp_path / "runs" / "small"
        assert plan.sizes == [4, 6]
        assert plan.rates == [0.1, 0.3]
        assert plan.modes == [BiasMode.UNBIASED]
        assert plan.tasks == ["pair"]
        assert plan.engine == ENGINE_QUANTUM
        assert plan.backend == BACKEND_MPS
        assert plan.threshold == DEFAULT_THRESHOLD
        assert plan.workers == 1
        assert not plan.with_gates

    def test_absolute_output(self, tmp_path):
        """Test that absolute output paths are kept."""
        target = tmp_path / "elsewhere"
        plan = load_plan(_write(tmp_path, PLAN.replace('"runs/small"', f'"{target.as_posix()}"')))
        assert plan.output_dir == target

    def test_biased_modes_need_gates(self, tmp_path):
        """Test that gate-aware modes turn on gate storage."""
        plan = load_plan(_write(tmp_path, PLAN + 'modes = ["unbiased", "biased", "biased"]\n'))
        assert plan.modes == [BiasMode.UNBIASED, BiasMode.BIASED]
        assert plan.with_gates

    def test_malformed_toml(self, tmp_path):
        """Test that broken TOML is rejected."""
        with pytest.raises(InvalidArgument, match="Malformed"):
            load_plan(_write(tmp_path, "[sweep\n"))

    def test_missing_file(self, tmp_path):
        """Test that a missing plan is rejected."""
        with pytest.raises(InvalidArgument, match="Cannot read"):
            load_plan(tmp_path / "absent.toml")

    @pytest.mark.parametrize(
        "extra",
        [
            "rates = [1.5]\n",
            'modes = ["sideways"]\n',
            "threshold = 0.0\n",
            'engine = "classical"\n',
        ],
    )
    def test_invalid_values(self, tmp_path, extra):
        """Test schema violations."""
        text = PLAN.replace("rates = [0.3, 0.1]\n", "") if extra.startswith("rates") else PLAN
        with pytest.raises(InvalidArgument):
            load_plan(_write(tmp_path, text + extra))

    def test_neel_needs_even_sizes(self, tmp_path):
        """Test that odd sizes are rejected for Neel states."""
        text = PLAN.replace("[6, 4, 4]", "[5, 4]") + 'init = "neel"\n'
        with pytest.raises(InvalidArgument, match="even"):
            load_plan(_write(tmp_path, text))

    def test_workers_from_environment(self, tmp_path, monkeypatch):
        """Test the environment fallback for the worker count."""
        monkeypatch.setenv(ENV_WORKERS, "3")
        assert load_plan(_write(tmp_path, PLAN)).workers == 3
        assert load_plan(_write(tmp_path, PLAN + "workers = 2\n")).workers == 2


class TestSweepPlan:
    """Test sweep cells and seeds."""

    @pytest.fixture
    def plan(self, tmp_path):
        return SweepPlan(
            output_dir=tmp_path,
            master_seed=7,
            sizes=[4, 6],
            rates=[0.1, 0.3],
            modes=[BiasMode.UNBIASED],
            tasks=["pair", TASK_ALL],
            records_per_class=2,
        )

    def test_cells(self, plan):
        """Test the sorted cell grid."""
        cells = plan.cells()
        assert len(cells) == 8
        assert cells[0] == SweepCell(4, 0.1, TASK_ALL)
        assert cells[0].name == "L4_p0.1000_all"

    def test_cell_seeds(self, plan):
        """Test that seeds are deterministic and distinct per cell."""
        seeds = [plan.cell_seed(cell) for cell in plan.cells()]
        assert len(set(seeds)) == len(seeds)
        assert seeds == [plan.cell_seed(cell) for cell in plan.cells()]

    def test_horizon_and_init(self, plan):
        """Test derived per-cell parameters."""
        assert plan.n_timesteps(6) == 6
        assert plan.init_for(TASK_ALL) == INIT_PLUS
        assert plan.init_for("pair") == plan.init


class TestDefaultWorkers:
    """Test the worker-count environment variable."""

    def test_unset(self):
        """Test the default of one worker."""
        assert default_workers() == 1

    def test_set(self, monkeypatch):
        """Test an explicit count."""
        monkeypatch.setenv(ENV_WORKERS, "4")
        assert default_workers() == 4

    @pytest.mark.parametrize("raw", ["many", "0", "-2"])
    def test_invalid(self, monkeypatch, raw):
        """Test rejected values."""
        monkeypatch.setenv(ENV_WORKERS, raw)
        with pytest.raises(InvalidArgument):
            default_workers()


class TestValidate:
    """Test schema wrapping."""

    def test_record_schema(self):
        """Test a valid and an invalid record."""
        data = {"version": 1, "seed": 0, "L": 4, "tf": 2, "p": 0.5, "init": "dicke(2)", "label": 2, "events": []}
        assert validate(RECORD_SCHEMA, data, "record")["L"] == 4
        with pytest.raises(InvalidArgument, match="Invalid record"):
            validate(RECORD_SCHEMA, {**data, "events": [[0, 1, 2]]}, "record")

    def test_plan_schema_missing_section(self):
        """Test that the sweep table is required."""
        with pytest.raises(InvalidArgument):
            validate(PLAN_SCHEMA, {}, "plan")
