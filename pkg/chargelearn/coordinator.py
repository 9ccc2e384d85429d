"""Batch drivers and the sweep coordinator."""
from __future__ import annotations

from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import hashlib
import logging
from pathlib import Path
from typing import Any, TypeVar

from .config import SweepCell, SweepPlan
from .const import (
    BACKEND_DENSE,
    BACKEND_MPS,
    CALIBRATION_FILE,
    CELLS_DIR,
    CROSSINGS_FILE,
    DEFAULT_BOOTSTRAP,
    DEFAULT_HIST_BINS,
    DEFAULT_TAIL_EPS,
    DEFAULT_THRESHOLD,
    DISTRIBUTION_FILE,
    ENGINE_QUANTUM,
    ENGINE_SEP,
    INIT_DICKE,
    INIT_PLUS,
    INIT_VECTOR_MATCHED,
    MANIFEST_FILE,
    MAX_DENSE_SITES,
    PERCOLATION_FILE,
    PERCOLATION_SUMMARY_FILE,
    PLOTS_DIR,
    RECORDS_FILE,
    RESULTS_FILE_TEMPLATE,
    SAMPLER_MARGINAL,
    SUMMARY_FILE,
    TASK_ALL,
    TASK_PAIR,
)
from .core import build_layout, derive_stream_seed, make_rng
from .decoder import evaluate_record, naive_mean_estimator, posterior
from .diagnostics import build_manifest
from .exceptions import BackendLimitExceeded, ChargeLearnError, InvalidArgument, MissingGateData, StateError
from .models import BiasMode, DecodeResult, ExperimentConfig, InitKind, MeasurementRecord
from .percolation import PercolationOutcome, PercolationRow, percolate_record, percolation_summary
from .plots import plot_distribution, plot_size_curves
from .qsim import run_trajectory, sample_realization
from .sepmodel import sample_record_from_model
from .stats import (
    GROUP_FIELDS,
    CrossingRow,
    DistributionReport,
    SummaryRow,
    build_sample_sets,
    calibration_bins,
    distribution_report,
    find_crossings,
    order_parameter_table,
    size_curves,
)
from .storage import RecordStore, ResultStore, file_sha256, read_json, write_csv, write_json

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

SUMMARY_HEADER = [
    "L",
    "p",
    "mode",
    "task",
    "n_samples",
    "accuracy",
    "accuracy_low",
    "accuracy_high",
    "theoretical_accuracy",
    "mean_entropy",
    "entropy_low",
    "entropy_high",
    "order_param",
    "mean_collision",
    "tail_weight",
    "lower_bound",
    "binder_pcorr",
    "binder_pcorr_err",
    "binder_entropy",
    "binder_entropy_err",
    "binder_confidence",
    "binder_confidence_err",
    "binder_correct",
    "binder_correct_err",
    "naive_accuracy",
]
DISTRIBUTION_HEADER = ["L", "p", "mode", "task", "bin_low", "bin_high", "count", "cdf"]
CROSSINGS_HEADER = ["mode", "task", "observable", "L_a", "L_b", "p_star", "band_low", "band_high", "n_resamples"]
CALIBRATION_HEADER = ["L", "p", "mode", "task", "bin_low", "bin_high", "count", "mean_confidence", "accuracy", "sigma"]
PERCOLATION_HEADER = [
    "seed",
    "L",
    "tf",
    "p",
    "label",
    "n_measured",
    "n_inferred",
    "cut_exists",
    "cut_charge",
    "cut_charge_matches_label",
    "wrong_label_excluded",
]
PERCOLATION_SUMMARY_HEADER = ["L", "p", "n_records", "fraction_with_cut", "ci_low", "ci_high", "match_rate"]

# (value field, error field, plot file stem, y-axis label)
BINDER_OBSERVABLES = (
    ("binder_entropy", "binder_entropy_err", "binder_entropy", "Binder ratio of posterior entropy"),
    ("binder_pcorr", "binder_pcorr_err", "binder_pcorr", "Binder ratio of P_corr"),
    ("binder_confidence", "binder_confidence_err", "binder_confidence", "Binder ratio of max posterior"),
    ("binder_correct", "binder_correct_err", "binder_correct", "Binder ratio of correctness"),
)
LINE_OBSERVABLES = (
    ("accuracy", None, "accuracy", "accuracy"),
    ("mean_entropy", None, "mean_entropy", "mean posterior entropy (bits)"),
    ("order_param", None, "order_param", "1 - E[P_corr]"),
    ("tail_weight", None, "tail_weight", "P(P_corr < 0.4)"),
)


def parallel_map(function: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Order-preserving map, in a process pool when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    chunksize = max(1, len(items) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, items, chunksize=chunksize))


# ---- generation ----
@dataclass(frozen=True)
class GenerateJob:
    config: ExperimentConfig
    record_seed: int
    engine: str = ENGINE_QUANTUM
    sampler: str = SAMPLER_MARGINAL


def generate_one(job: GenerateJob) -> MeasurementRecord:
    config = job.config
    if job.engine == ENGINE_QUANTUM:
        record, _, _ = run_trajectory(config, job.record_seed)
        return record
    if job.engine != ENGINE_SEP:
        raise InvalidArgument(f"Unknown engine: {job.engine}")

    rng = make_rng(job.record_seed)
    realization = None
    hops = None
    if config.with_gates:
        realization = sample_realization(build_layout(config.n_sites, config.n_timesteps), rng)
        hops = realization.hops()
    record, _ = sample_record_from_model(
        config.n_sites,
        config.n_timesteps,
        config.p,
        config.init_kind,
        rng,
        hops,
        sampler=job.sampler,
        record_seed=job.record_seed,
    )
    return replace(record, gates=realization) if realization is not None else record


def generation_jobs(
    config: ExperimentConfig,
    task: str = TASK_PAIR,
    engine: str = ENGINE_QUANTUM,
    sampler: str = SAMPLER_MARGINAL,
) -> list[GenerateJob]:
    """Jobs in file order; record j of the file uses stream j of the master seed."""
    if task == TASK_ALL:
        if config.init_kind.name != INIT_PLUS:
            config = replace(config, init_kind=InitKind(INIT_PLUS))
        per_class = [config]
    elif task == TASK_PAIR:
        if not config.labels:
            raise InvalidArgument("The pair task needs labels")
        per_class = [config.for_label(label) for label in config.labels]
    else:
        raise InvalidArgument(f"Unknown task: {task}")

    jobs = []
    for class_index, class_config in enumerate(per_class):
        for index in range(config.n_records):
            stream = class_index * config.n_records + index
            jobs.append(GenerateJob(class_config, derive_stream_seed(config.master_seed, stream), engine, sampler))
    return jobs


def generate_records(
    config: ExperimentConfig,
    task: str = TASK_PAIR,
    engine: str = ENGINE_QUANTUM,
    sampler: str = SAMPLER_MARGINAL,
    workers: int = 1,
) -> list[MeasurementRecord]:
    jobs = generation_jobs(config, task, engine, sampler)
    records = parallel_map(generate_one, jobs, workers)
    _LOGGER.info(
        "Generated %d records (L=%d, t_f=%d, p=%s, engine=%s)",
        len(records),
        config.n_sites,
        config.n_timesteps,
        config.p,
        engine,
    )
    return records


# ---- decoding ----
def resolve_labels(record: MeasurementRecord, label_set: str | Sequence[int]) -> list[int]:
    """'pair' -> (L/2 - 1, L/2), 'all' -> 0..L, or an explicit list.

    A plus-state record carries a random charge, so 'pair' widens to every charge for it.
    """
    L = record.n_sites
    if label_set == TASK_PAIR and record.init_kind.name == INIT_PLUS:
        label_set = TASK_ALL
    if label_set == TASK_PAIR:
        return [L // 2 - 1, L // 2]
    if label_set == TASK_ALL:
        return list(range(L + 1))
    if isinstance(label_set, str):
        raise InvalidArgument(f"Unknown label set: {label_set}")
    return list(label_set)


@dataclass(frozen=True)
class DecodeJob:
    record: MeasurementRecord
    labels: tuple[int, ...]
    task: str
    mode: BiasMode = BiasMode.UNBIASED
    backend: str = BACKEND_MPS
    threshold: float = DEFAULT_THRESHOLD
    init_vector: str = INIT_VECTOR_MATCHED


def decode_one(job: DecodeJob) -> DecodeResult:
    record = job.record
    if record.true_label is None:
        outcome = posterior(record, job.labels, job.mode, job.backend, job.threshold, job.init_vector)
    else:
        outcome = evaluate_record(record, job.labels, job.mode, job.backend, job.threshold, job.init_vector)
    naive = naive_mean_estimator(record, *job.labels) if len(job.labels) == 2 else None
    return DecodeResult(
        record_seed=record.record_seed,
        n_sites=record.n_sites,
        n_timesteps=record.layout.n_timesteps,
        p=record.p,
        init_kind=record.init_kind,
        task=job.task,
        outcome=outcome,
        naive_label=naive,
    )


def decode_records(
    records: Sequence[MeasurementRecord],
    labels: str | Sequence[int] = TASK_PAIR,
    mode: BiasMode | str = BiasMode.UNBIASED,
    backend: str = BACKEND_MPS,
    threshold: float = DEFAULT_THRESHOLD,
    init_vector: str = INIT_VECTOR_MATCHED,
    workers: int = 1,
) -> list[DecodeResult]:
    """Decode every record; mode and backend limits are checked before any work starts."""
    mode = BiasMode(mode)
    if backend not in (BACKEND_DENSE, BACKEND_MPS):
        raise InvalidArgument(f"Unknown backend: {backend}")
    if backend == BACKEND_DENSE:
        largest = max((record.n_sites for record in records), default=0)
        if largest > MAX_DENSE_SITES:
            raise BackendLimitExceeded(f"Dense backend supports L <= {MAX_DENSE_SITES}, file has L={largest}")
    if mode is not BiasMode.UNBIASED:
        missing = sum(1 for record in records if record.gates is None)
        if missing:
            raise MissingGateData(f"{mode} decoding needs gate data; {missing} of {len(records)} records lack it")

    widened = sum(1 for record in records if labels == TASK_PAIR and record.init_kind.name == INIT_PLUS)
    if widened:
        _LOGGER.info("Decoding %d plus-state records over every charge", widened)
    jobs = []
    for record in records:
        record_labels = resolve_labels(record, labels)
        task = TASK_ALL if labels == TASK_ALL or record.init_kind.name == INIT_PLUS else TASK_PAIR
        jobs.append(DecodeJob(record, tuple(record_labels), task, mode, backend, threshold, init_vector))
    results = parallel_map(decode_one, jobs, workers)
    if results:
        accuracy = sum(1 for result in results if result.outcome.correct) / len(results)
        _LOGGER.info("Decoded %d records (%s, %s): accuracy %.4f", len(results), mode, backend, accuracy)
    return results


# ---- percolation ----
def wrong_label_excluded(result: DecodeResult) -> bool | None:
    """Whether the decoder gave every wrong label exactly zero posterior."""
    outcome = result.outcome
    if outcome.true_label is None:
        return None
    return all(
        value == 0.0
        for label, value in zip(outcome.labels, outcome.posterior, strict=True)
        if label != outcome.true_label
    )


@dataclass
class PercolationReport:
    outcomes: list[PercolationOutcome]
    rows: list[PercolationRow]
    excluded: dict[int, bool | None] = field(default_factory=dict)

    @property
    def sharpness_violations(self) -> int:
        """Records with a cut whose decode still left weight on a wrong label."""
        return sum(
            1 for outcome in self.outcomes if outcome.cut.exists and self.excluded.get(outcome.record_seed) is False
        )


def percolate_records(
    records: Sequence[MeasurementRecord],
    results: Iterable[DecodeResult] | None = None,
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
    workers: int = 1,
) -> PercolationReport:
    outcomes = parallel_map(percolate_record, list(records), workers)
    excluded: dict[int, bool | None] = {}
    if results is not None:
        excluded = {result.record_seed: wrong_label_excluded(result) for result in results}
    report = PercolationReport(outcomes, percolation_summary(outcomes, n_boot, seed), excluded)
    if report.sharpness_violations:
        _LOGGER.warning("%d records with a charge cut kept weight on a wrong label", report.sharpness_violations)
    return report


def write_percolation(report: PercolationReport, path: str | Path) -> tuple[Path, Path]:
    """Per-record CSV at `path` and the per-(L, p) summary next to it."""
    path = Path(path)
    write_csv(
        path,
        PERCOLATION_HEADER,
        (
            [
                outcome.record_seed,
                outcome.n_sites,
                outcome.n_timesteps,
                outcome.p,
                outcome.true_label,
                outcome.n_measured,
                outcome.n_inferred,
                outcome.cut.exists,
                outcome.cut.extracted_charge,
                outcome.cut_charge_matches_label,
                report.excluded.get(outcome.record_seed),
            ]
            for outcome in report.outcomes
        ),
    )
    summary_path = path.with_name(f"{path.stem}_summary.csv")
    write_percolation_summary(report.rows, summary_path)
    return path, summary_path


def write_percolation_summary(rows: Iterable[PercolationRow], path: str | Path) -> None:
    write_csv(
        path,
        PERCOLATION_SUMMARY_HEADER,
        ([row.n_sites, row.p, row.n_records, row.fraction, row.low, row.high, row.match_rate] for row in rows),
    )


# ---- analysis ----
@dataclass
class AnalysisReport:
    rows: list[SummaryRow]
    crossings: list[CrossingRow]
    distributions: dict[tuple[int, float, str, str], DistributionReport]
    files: list[Path] = field(default_factory=list)


def _summary_line(row: SummaryRow) -> list[Any]:
    key = row.key
    return [
        key.n_sites,
        key.p,
        key.bias_mode,
        key.task,
        row.n_samples,
        row.accuracy,
        row.accuracy_low,
        row.accuracy_high,
        row.theoretical_accuracy,
        row.mean_entropy,
        row.entropy_low,
        row.entropy_high,
        row.order_param,
        row.mean_collision,
        row.tail_weight,
        row.lower_bound,
        row.binder_pcorr,
        row.binder_pcorr_err,
        row.binder_entropy,
        row.binder_entropy_err,
        row.binder_confidence,
        row.binder_confidence_err,
        row.binder_correct,
        row.binder_correct_err,
        row.naive_accuracy,
    ]


def analyze_results(
    results: Sequence[DecodeResult],
    out_dir: str | Path,
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
    plots: bool = True,
    n_bins: int = DEFAULT_HIST_BINS,
    group_by: Sequence[str] = GROUP_FIELDS,
) -> AnalysisReport:
    """Summary, distribution and crossing CSVs plus SVG plots for a set of results."""
    if not results:
        raise StateError("No results to analyse")
    out_dir = Path(out_dir)
    sample_sets = build_sample_sets(results, group_by)
    rows = order_parameter_table(sample_sets, n_boot, seed)

    distributions = {}
    for sample_set in sample_sets:
        key = sample_set.key
        distributions[(key.n_sites, key.p, key.bias_mode, key.task)] = distribution_report(
            sample_set.p_corr.clip(0.0, 1.0), n_bins, DEFAULT_TAIL_EPS
        )

    crossings: list[CrossingRow] = []
    for index, (value_field, error_field, _, _) in enumerate(BINDER_OBSERVABLES):
        crossings.extend(find_crossings(rows, value_field, error_field, seed=derive_stream_seed(seed, 1000 + index)))

    files = [out_dir / SUMMARY_FILE, out_dir / DISTRIBUTION_FILE, out_dir / CROSSINGS_FILE, out_dir / CALIBRATION_FILE]
    write_csv(files[0], SUMMARY_HEADER, (_summary_line(row) for row in rows))
    write_csv(
        files[1],
        DISTRIBUTION_HEADER,
        (
            [L, p, mode, task, report.edges[b], report.edges[b + 1], report.counts[b], report.cdf[b]]
            for (L, p, mode, task), report in sorted(distributions.items())
            for b in range(len(report.counts))
        ),
    )
    write_csv(
        files[2],
        CROSSINGS_HEADER,
        (
            [
                row.bias_mode,
                row.task,
                row.observable,
                row.size_a,
                row.size_b,
                row.estimate.p_star,
                row.estimate.low,
                row.estimate.high,
                row.estimate.n_resamples,
            ]
            for row in crossings
        ),
    )
    write_csv(
        files[3],
        CALIBRATION_HEADER,
        (
            [
                sample_set.key.n_sites,
                sample_set.key.p,
                sample_set.key.bias_mode,
                sample_set.key.task,
                calibration.low,
                calibration.high,
                calibration.count,
                calibration.mean_confidence,
                calibration.accuracy,
                calibration.sigma,
            ]
            for sample_set in sample_sets
            for calibration in calibration_bins(sample_set.confidence, sample_set.correct)
            if calibration.count
        ),
    )
    if plots:
        files.extend(_write_plots(rows, crossings, distributions, out_dir / PLOTS_DIR))
    _LOGGER.info("Analysed %d results into %d groups, %d crossings", len(results), len(rows), len(crossings))
    return AnalysisReport(rows, crossings, distributions, files)


def _slug(text: str) -> str:
    return text.replace("*", "pooled")


def _write_plots(
    rows: Sequence[SummaryRow],
    crossings: Sequence[CrossingRow],
    distributions: dict[tuple[int, float, str, str], DistributionReport],
    plot_dir: Path,
) -> list[Path]:
    written = []
    for value_field, error_field, stem, ylabel in BINDER_OBSERVABLES + LINE_OBSERVABLES:
        for (mode, task), by_size in sorted(size_curves(rows, value_field, error_field).items()):
            marks = [
                row.estimate.p_star
                for row in crossings
                if row.observable == value_field and row.bias_mode == mode and row.task == task
            ]
            path = plot_dir / f"{stem}_{_slug(mode)}_{_slug(task)}.svg"
            written.append(plot_size_curves(path, by_size, ylabel, f"{mode}, {task}", marks))
    grouped: dict[tuple[str, str], dict[str, DistributionReport]] = defaultdict(dict)
    for (L, p, mode, task), report in sorted(distributions.items()):
        grouped[(mode, task)][f"L={L} p={p:g}"] = report
    for (mode, task), reports in sorted(grouped.items()):
        path = plot_dir / f"cdf_pcorr_{_slug(mode)}_{_slug(task)}.svg"
        written.append(plot_distribution(path, reports, f"{mode}, {task}"))
    return written


# ---- sweep ----
@dataclass
class SweepReport:
    computed: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    analysis_skipped: bool = False
    manifest_path: Path | None = None


def _hash_inputs(hashes: Iterable[str]) -> str:
    digest = hashlib.sha256()
    for value in hashes:
        digest.update(value.encode("ascii"))
    return digest.hexdigest()


class SweepCoordinator:
    """Runs generate -> decode -> percolate per cell, then analyses the whole grid.

    Cells whose recorded parameters and output hashes still match the manifest are
    skipped, so an interrupted sweep resumes where it stopped.
    """

    def __init__(self, plan: SweepPlan) -> None:
        self.plan = plan
        self.output_dir = Path(plan.output_dir)
        self.manifest_path = self.output_dir / MANIFEST_FILE
        self.cells: dict[str, dict[str, Any]] = {}
        self.analysis: dict[str, Any] = {}

    def cell_dir(self, cell: SweepCell) -> Path:
        return self.output_dir / CELLS_DIR / cell.name

    def cell_parameters(self, cell: SweepCell) -> dict[str, Any]:
        plan = self.plan
        return {
            "L": cell.n_sites,
            "p": cell.p,
            "task": cell.task,
            "tf": plan.n_timesteps(cell.n_sites),
            "records_per_class": plan.records_per_class,
            "engine": plan.engine,
            "sampler": plan.sampler,
            "init": plan.init_for(cell.task),
            "backend": plan.backend,
            "threshold": plan.threshold,
            "modes": [str(mode) for mode in plan.modes],
            "seed": plan.cell_seed(cell),
        }

    def _load_previous(self) -> dict[str, Any]:
        if not self.manifest_path.exists():
            return {}
        try:
            return read_json(self.manifest_path)
        except ChargeLearnError as ex:
            _LOGGER.warning("Ignoring unreadable manifest %s: %s", self.manifest_path, ex)
            return {}

    def _is_current(self, entry: dict[str, Any] | None, parameters: dict[str, Any], directory: Path) -> bool:
        if not entry or entry.get("parameters") != parameters:
            return False
        return self._files_match(entry.get("files", {}), directory)

    @staticmethod
    def _files_match(files: dict[str, str], directory: Path) -> bool:
        if not files:
            return False
        for name, digest in files.items():
            path = directory / name
            if not path.exists() or file_sha256(path) != digest:
                return False
        return True

    def _experiment(self, cell: SweepCell) -> ExperimentConfig:
        plan = self.plan
        L = cell.n_sites
        init = plan.init_for(cell.task)
        labels = [L // 2, L // 2 - 1] if cell.task == TASK_PAIR else []
        kind = InitKind.dicke(L // 2) if init == INIT_DICKE else InitKind.parse(init)
        return ExperimentConfig(
            n_sites=L,
            n_timesteps=plan.n_timesteps(L),
            p=cell.p,
            n_records=plan.records_per_class,
            labels=labels,
            init_kind=kind,
            master_seed=plan.cell_seed(cell),
            backend=plan.backend,
            threshold=plan.threshold,
            with_gates=plan.with_gates,
        )

    def run_cell(self, cell: SweepCell) -> dict[str, Any]:
        plan = self.plan
        directory = self.cell_dir(cell)
        config = self._experiment(cell)
        records = generate_records(config, cell.task, plan.engine, plan.sampler, plan.workers)
        RecordStore(directory / RECORDS_FILE).save(records)

        files = [RECORDS_FILE]
        unbiased_results = None
        for mode in plan.modes:
            results = decode_records(
                records, cell.task, mode, plan.backend, plan.threshold, INIT_VECTOR_MATCHED, plan.workers
            )
            name = RESULTS_FILE_TEMPLATE.format(mode=mode)
            ResultStore(directory / name).save(results)
            files.append(name)
            if mode is BiasMode.UNBIASED:
                unbiased_results = results

        report = percolate_records(records, unbiased_results, plan.boot, config.master_seed, plan.workers)
        write_percolation(report, directory / PERCOLATION_FILE)
        files.append(PERCOLATION_FILE)
        return {
            "parameters": self.cell_parameters(cell),
            "files": {name: file_sha256(directory / name) for name in files},
            "statistics": {
                "records": len(records),
                "events": sum(len(record.events) for record in records),
                "cut_fraction": report.rows[0].fraction if report.rows else None,
                "sharpness_violations": report.sharpness_violations,
            },
        }

    def result_paths(self) -> list[Path]:
        return [
            self.cell_dir(cell) / RESULTS_FILE_TEMPLATE.format(mode=mode)
            for cell in self.plan.cells()
            for mode in self.plan.modes
        ]

    def run(self) -> SweepReport:
        previous = self._load_previous()
        previous_cells = previous.get("cells", {})
        report = SweepReport()

        for cell in self.plan.cells():
            parameters = self.cell_parameters(cell)
            entry = previous_cells.get(cell.name)
            if self._is_current(entry, parameters, self.cell_dir(cell)):
                _LOGGER.info("Cell %s is up to date, skipping", cell.name)
                self.cells[cell.name] = entry
                report.skipped.append(cell.name)
                continue
            _LOGGER.info("Running cell %s", cell.name)
            self.cells[cell.name] = self.run_cell(cell)
            report.computed.append(cell.name)
            self.write_manifest()

        inputs = _hash_inputs(file_sha256(path) for path in self.result_paths())
        previous_analysis = previous.get("analysis", {})
        if (
            previous_analysis.get("inputs") == inputs
            and previous_analysis.get("boot") == self.plan.boot
            and self._files_match(previous_analysis.get("files", {}), self.output_dir)
        ):
            _LOGGER.info("Analysis is up to date, skipping")
            self.analysis = previous_analysis
            report.analysis_skipped = True
        else:
            self.analysis = self.run_analysis(inputs)

        report.manifest_path = self.write_manifest()
        return report

    def run_analysis(self, inputs: str) -> dict[str, Any]:
        results = [result for path in self.result_paths() for result in ResultStore(path).load()]
        analysis = analyze_results(results, self.output_dir, self.plan.boot, self.plan.master_seed)

        records = [
            record for cell in self.plan.cells() for record in RecordStore(self.cell_dir(cell) / RECORDS_FILE).load()
        ]
        rows = percolation_summary(records, self.plan.boot, self.plan.master_seed)
        write_percolation_summary(rows, self.output_dir / PERCOLATION_SUMMARY_FILE)

        outputs = [*analysis.files, self.output_dir / PERCOLATION_SUMMARY_FILE]
        return {
            "inputs": inputs,
            "boot": self.plan.boot,
            "files": {str(path.relative_to(self.output_dir)): file_sha256(path) for path in outputs},
            "groups": len(analysis.rows),
            "crossings": len(analysis.crossings),
        }

    def write_manifest(self) -> Path:
        write_json(self.manifest_path, build_manifest(self))
        return self.manifest_path
