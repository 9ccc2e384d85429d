"""Schemas for record files, result files and sweep plans."""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import os
from pathlib import Path
import tomllib
from typing import Any

import voluptuous as vol

from .const import (
    BACKEND_DENSE,
    BACKEND_MPS,
    DEFAULT_BOOTSTRAP,
    DEFAULT_THRESHOLD,
    ENGINE_QUANTUM,
    ENGINE_SEP,
    ENV_WORKERS,
    FORMAT_VERSION,
    INIT_DICKE,
    INIT_NEEL,
    INIT_PLUS,
    SAMPLER_MARGINAL,
    SAMPLER_MARKOV,
    TASK_ALL,
    TASK_PAIR,
)
from .core import derive_stream_seed
from .exceptions import InvalidArgument
from .models import BiasMode

_LOGGER = logging.getLogger(__name__)

CONF_OUTPUT_DIR = "output_dir"
CONF_MASTER_SEED = "master_seed"
CONF_SIZES = "sizes"
CONF_RATES = "rates"
CONF_MODES = "modes"
CONF_TASKS = "tasks"
CONF_RECORDS_PER_CLASS = "records_per_class"
CONF_TIMESTEPS = "timesteps"
CONF_ENGINE = "engine"
CONF_SAMPLER = "sampler"
CONF_INIT = "init"
CONF_BACKEND = "backend"
CONF_THRESHOLD = "threshold"
CONF_WORKERS = "workers"
CONF_BOOT = "boot"

_SEED = vol.All(int, vol.Range(min=0))
_RATE = vol.All(vol.Coerce(float), vol.Range(min=0.0, max=1.0))
_FLOAT = vol.All(vol.Coerce(float))

RECORD_SCHEMA = vol.Schema(
    {
        vol.Required("version"): vol.In([FORMAT_VERSION]),
        vol.Required("seed"): _SEED,
        vol.Required("L"): vol.All(int, vol.Range(min=2)),
        vol.Required("tf"): vol.All(int, vol.Range(min=1)),
        vol.Required("p"): vol.Any(None, _RATE),
        vol.Required("init"): str,
        vol.Required("label"): vol.Any(None, vol.All(int, vol.Range(min=0))),
        vol.Required("events"): [vol.ExactSequence([int, int, vol.In([0, 1])])],
        vol.Optional("gates"): [vol.ExactSequence([int, int, _FLOAT, _FLOAT, _FLOAT, _FLOAT, _FLOAT])],
    }
)

RESULT_SCHEMA = vol.Schema(
    {
        vol.Required("version"): vol.In([FORMAT_VERSION]),
        vol.Required("seed"): _SEED,
        vol.Required("L"): vol.All(int, vol.Range(min=2)),
        vol.Required("tf"): vol.All(int, vol.Range(min=1)),
        vol.Required("p"): vol.Any(None, _RATE),
        vol.Required("init"): str,
        vol.Required("task"): vol.In([TASK_PAIR, TASK_ALL]),
        vol.Required("mode"): vol.In([mode.value for mode in BiasMode]),
        vol.Required("backend"): vol.In([BACKEND_DENSE, BACKEND_MPS]),
        vol.Required("labels"): [int],
        vol.Required("log_likelihoods"): [vol.Any(None, _FLOAT)],
        vol.Required("posterior"): [_FLOAT],
        vol.Required("predicted"): int,
        vol.Required("label"): vol.Any(None, int),
        vol.Required("p_corr"): vol.Any(None, _FLOAT),
        vol.Required("entropy_bits"): _FLOAT,
        vol.Optional("naive"): vol.Any(None, int),
    }
)

PLAN_SCHEMA = vol.Schema(
    {
        vol.Required("sweep"): {
            vol.Required(CONF_OUTPUT_DIR): str,
            vol.Required(CONF_MASTER_SEED): _SEED,
            vol.Required(CONF_SIZES): vol.All([vol.All(int, vol.Range(min=2))], vol.Length(min=1)),
            vol.Required(CONF_RATES): vol.All([_RATE], vol.Length(min=1)),
            vol.Optional(CONF_MODES, default=[BiasMode.UNBIASED.value]): vol.All(
                [vol.In([mode.value for mode in BiasMode])], vol.Length(min=1)
            ),
            vol.Optional(CONF_TASKS, default=[TASK_PAIR]): vol.All([vol.In([TASK_PAIR, TASK_ALL])], vol.Length(min=1)),
            vol.Required(CONF_RECORDS_PER_CLASS): vol.All(int, vol.Range(min=1)),
            vol.Optional(CONF_TIMESTEPS): vol.Any(None, vol.All(int, vol.Range(min=1))),
            vol.Optional(CONF_ENGINE, default=ENGINE_QUANTUM): vol.In([ENGINE_QUANTUM, ENGINE_SEP]),
            vol.Optional(CONF_SAMPLER, default=SAMPLER_MARGINAL): vol.In([SAMPLER_MARGINAL, SAMPLER_MARKOV]),
            vol.Optional(CONF_INIT, default=INIT_DICKE): vol.In([INIT_DICKE, INIT_NEEL]),
            vol.Optional(CONF_BACKEND, default=BACKEND_MPS): vol.In([BACKEND_DENSE, BACKEND_MPS]),
            vol.Optional(CONF_THRESHOLD, default=DEFAULT_THRESHOLD): vol.All(
                vol.Coerce(float), vol.Range(min=0.0, min_included=False)
            ),
            vol.Optional(CONF_WORKERS): vol.Any(None, vol.All(int, vol.Range(min=1))),
            vol.Optional(CONF_BOOT, default=DEFAULT_BOOTSTRAP): vol.All(int, vol.Range(min=1)),
        }
    }
)


def validate(schema: vol.Schema, data: Any, what: str) -> dict[str, Any]:
    """Run a schema and turn voluptuous errors into InvalidArgument."""
    try:
        return schema(data)
    except vol.Invalid as ex:
        raise InvalidArgument(f"Invalid {what}: {ex}") from ex


def default_workers() -> int:
    """Worker count from CHARGELEARN_WORKERS, else 1."""
    raw = os.environ.get(ENV_WORKERS)
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError as ex:
        raise InvalidArgument(f"{ENV_WORKERS} must be an integer, got {raw!r}") from ex
    if workers < 1:
        raise InvalidArgument(f"{ENV_WORKERS} must be positive, got {workers}")
    return workers


@dataclass(frozen=True, order=True)
class SweepCell:
    n_sites: int
    p: float
    task: str

    @property
    def name(self) -> str:
        return f"L{self.n_sites}_p{self.p:.4f}_{self.task}"


@dataclass
class SweepPlan:
    output_dir: Path
    master_seed: int
    sizes: list[int]
    rates: list[float]
    modes: list[BiasMode]
    tasks: list[str]
    records_per_class: int
    timesteps: int | None = None
    engine: str = ENGINE_QUANTUM
    sampler: str = SAMPLER_MARGINAL
    init: str = INIT_DICKE
    backend: str = BACKEND_MPS
    threshold: float = DEFAULT_THRESHOLD
    workers: int = 1
    boot: int = DEFAULT_BOOTSTRAP
    source: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.init == INIT_NEEL:
            odd = [size for size in self.sizes if size % 2]
            if odd:
                raise InvalidArgument(f"Neel initial states need even sizes, got {odd}")

    @property
    def with_gates(self) -> bool:
        return any(mode is not BiasMode.UNBIASED for mode in self.modes)

    def cells(self) -> list[SweepCell]:
        return sorted(SweepCell(size, rate, task) for size in self.sizes for rate in self.rates for task in self.tasks)

    def n_timesteps(self, n_sites: int) -> int:
        return self.timesteps or n_sites

    def cell_seed(self, cell: SweepCell) -> int:
        """Deterministic per-cell master seed from (L, p) and the task."""
        task_index = 0 if cell.task == TASK_PAIR else 1
        coordinate = (cell.n_sites << 32) | (round(cell.p * 1e6) << 1) | task_index
        return derive_stream_seed(self.master_seed, coordinate)

    def init_for(self, task: str) -> str:
        return INIT_PLUS if task == TASK_ALL else self.init


def load_plan(path: str | Path) -> SweepPlan:
    """Parse and validate a TOML sweep plan; relative output paths resolve against the plan."""
    path = Path(path)
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as ex:
        raise InvalidArgument(f"Malformed plan {path}: {ex}") from ex
    except OSError as ex:
        raise InvalidArgument(f"Cannot read plan {path}: {ex}") from ex

    data = validate(PLAN_SCHEMA, raw, f"plan {path}")["sweep"]
    output_dir = Path(data[CONF_OUTPUT_DIR])
    if not output_dir.is_absolute():
        output_dir = path.parent / output_dir
    plan = SweepPlan(
        output_dir=output_dir,
        master_seed=data[CONF_MASTER_SEED],
        sizes=sorted(set(data[CONF_SIZES])),
        rates=sorted(set(data[CONF_RATES])),
        modes=[BiasMode(mode) for mode in dict.fromkeys(data[CONF_MODES])],
        tasks=list(dict.fromkeys(data[CONF_TASKS])),
        records_per_class=data[CONF_RECORDS_PER_CLASS],
        timesteps=data.get(CONF_TIMESTEPS),
        engine=data[CONF_ENGINE],
        sampler=data[CONF_SAMPLER],
        init=data[CONF_INIT],
        backend=data[CONF_BACKEND],
        threshold=data[CONF_THRESHOLD],
        workers=data.get(CONF_WORKERS) or default_workers(),
        boot=data[CONF_BOOT],
        source=raw,
    )
    _LOGGER.info("Loaded plan %s with %d cells", path, len(plan.cells()))
    return plan
