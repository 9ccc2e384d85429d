"""Command-line interface: generate, decode, analyze, percolate, verify, sweep."""
from __future__ import annotations

import argparse
from collections.abc import Callable, Sequence
import logging
import math
from pathlib import Path
import sys


from . import __version__
from .config import default_workers, load_plan
from .const import (
    BACKEND_DENSE,
    BACKEND_MPS,
    DEFAULT_BOOTSTRAP,
    DEFAULT_HIST_BINS,
    DEFAULT_THRESHOLD,
    ENGINE_QUANTUM,
    ENGINE_SEP,
    ENUMERATION_TOLERANCE,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    HAAR_TOLERANCE,
    INIT_DICKE,
    INIT_NEEL,
    INIT_PLUS,
    INIT_VECTOR_DICKE,
    INIT_VECTOR_MATCHED,
    SAMPLER_MARGINAL,
    SAMPLER_MARKOV,
    TASK_ALL,
    TASK_PAIR,
)
from .coordinator import (
    SweepCoordinator,
    analyze_results,
    decode_records,
    generate_records,
    percolate_records,
    write_percolation,
)
from .core import build_layout, make_rng
from .exceptions import ChargeLearnError, VerificationFailed
from .models import BiasMode, ExperimentConfig, InitKind
from .sepmodel import (
    all_placements,
    born_equivalence,
    enumerate_outcome_probabilities,
    sample_record_from_model,
    verify_doubled_channel,
)
from .stats import GROUP_FIELDS, empirical_distribution, total_variation_distance
from .storage import RecordStore, ResultStore

_LOGGER = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
TV_TOLERANCE = 0.02


def _rate(text: str) -> float:
    try:
        value = float(text)
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from ex
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from ex
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as ex:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of integers: {text!r}") from ex


def _label_spec(text: str) -> str | list[int]:
    if text in (TASK_PAIR, TASK_ALL):
        return text
    return _int_list(text)


def configure_logging(verbosity: int = 0, quiet: bool = False) -> None:
    level = logging.ERROR if quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(verbosity, 2)]
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _report(line: str) -> None:
    print(line)


# ---- generate ----
def cmd_generate(args: argparse.Namespace) -> int:
    L = args.L
    t_f = args.tf or L
    task = TASK_ALL if args.init == INIT_PLUS else args.task
    if task == TASK_ALL:
        kind, labels = InitKind(INIT_PLUS), []
    else:
        labels = args.labels or [L // 2, L // 2 - 1]
        kind = InitKind(INIT_NEEL) if args.init == INIT_NEEL else InitKind.dicke(labels[0])
    config = ExperimentConfig(
        n_sites=L,
        n_timesteps=t_f,
        p=args.p,
        n_records=args.n,
        labels=labels,
        init_kind=kind,
        master_seed=args.seed,
        with_gates=args.with_gates,
    )
    records = generate_records(config, task, args.engine, args.sampler, args.workers)
    count = RecordStore(args.out).save(records)
    _report(f"Wrote {count} records to {args.out}")
    return EXIT_OK


# ---- decode ----
def cmd_decode(args: argparse.Namespace) -> int:
    records = RecordStore(args.records).load()
    results = decode_records(
        records,
        args.labels,
        args.mode,
        args.backend,
        args.threshold,
        args.init_vector,
        args.workers,
    )
    ResultStore(args.out).save(results)
    correct = sum(1 for result in results if result.outcome.correct)
    _report(f"Decoded {len(results)} records to {args.out} ({correct} correct)")
    return EXIT_OK


# ---- analyze ----
def cmd_analyze(args: argparse.Namespace) -> int:
    results = [result for path in args.results for result in ResultStore(path).load()]
    group_by = [field.strip() for field in args.group_by.split(",") if field.strip()]
    report = analyze_results(
        results,
        args.out_dir,
        n_boot=args.boot,
        seed=args.seed,
        plots=not args.no_plots,
        n_bins=args.bins,
        group_by=group_by,
    )
    _report(f"Summarised {len(report.rows)} groups and {len(report.crossings)} crossings into {args.out_dir}")
    return EXIT_OK


# ---- percolate ----
def cmd_percolate(args: argparse.Namespace) -> int:
    records = RecordStore(args.records).load()
    results = ResultStore(args.results).load() if args.results else None
    report = percolate_records(records, results, args.boot, args.seed, args.workers)
    per_record, summary = write_percolation(report, args.out)
    for row in report.rows:
        _report(f"L={row.n_sites} p={row.p}: cut fraction {row.fraction:.4f} [{row.low:.4f}, {row.high:.4f}]")
    _report(f"Wrote {per_record} and {summary}")
    if report.sharpness_violations:
        _LOGGER.warning("%d records with a cut were not decoded sharply", report.sharpness_violations)
    return EXIT_OK


# ---- verify ----
def cmd_verify_haar(args: argparse.Namespace) -> int:
    channel = verify_doubled_channel(args.n, make_rng(args.seed), haar=args.haar)
    for charge in range(3):
        _report(f"charge {charge} block deviation: {channel.sector_deviation(charge):.5f}")
    _report(f"off-block weight: {channel.off_block_weight():.3e}")
    _report(f"max deviation: {channel.max_deviation:.5f} (tolerance {args.tolerance})")
    if channel.max_deviation >= args.tolerance:
        raise VerificationFailed(f"Doubled channel deviates by {channel.max_deviation:.5f} >= {args.tolerance}")
    return EXIT_OK


def cmd_verify_born(args: argparse.Namespace) -> int:
    L = args.L
    t_f = args.tf or L
    labels = args.labels or [L // 2 - 1, L // 2]
    rng = make_rng(args.seed)
    record, _ = sample_record_from_model(L, t_f, args.p, InitKind.dicke(labels[-1]), rng)
    _report(f"Record with {len(record.events)} events on L={L}, t_f={t_f}")
    failed = []
    for label in labels:
        report = born_equivalence(record, InitKind.dicke(label), args.n, rng)
        _report(
            f"Q={label}: quantum {report.quantum_mean:.6g} +- {report.standard_error:.2g}, "
            f"exclusion process {report.sep_probability:.6g}, z={report.z_score:.2f}: {report.verdict}"
        )
        if report.verdict == "inconclusive":
            _LOGGER.warning("Q=%d is inconclusive at n=%d; increase --n", label, args.n)
        elif report.verdict == "fail":
            failed.append(label)
    if failed:
        raise VerificationFailed(f"Born equivalence failed for charges {failed}")
    return EXIT_OK


def cmd_verify_enumeration(args: argparse.Namespace) -> int:
    L = args.L
    t_f = args.tf or L
    layout = build_layout(L, t_f)
    rng = make_rng(args.seed)
    if args.p is None:
        placements = all_placements(layout)
    else:
        placements = {placement for placement in sorted(all_placements(layout)) if rng.random() < args.p}
    worst = 0.0
    for charge in range(L + 1):
        table = enumerate_outcome_probabilities(layout, placements, charge)
        total = math.fsum(table.values())
        worst = max(worst, abs(total - 1.0))
        _report(f"Q={charge}: {len(table)} outcome assignments, total probability {total:.15f}")
        if args.samples:
            sampled = empirical_distribution(
                tuple(record.outcomes())
                for record in (
                    sample_record_from_model(L, t_f, 0.0, charge, rng, placements=placements, sampler=args.sampler)[0]
                    for _ in range(args.samples)
                )
            )
            distance = total_variation_distance(sampled, table)
            _report(f"Q={charge}: sampler total variation {distance:.4f}")
            if distance >= TV_TOLERANCE:
                raise VerificationFailed(f"Sampler total variation {distance:.4f} >= {TV_TOLERANCE} at Q={charge}")
    if worst > ENUMERATION_TOLERANCE:
        raise VerificationFailed(f"Enumerated probabilities miss 1 by {worst:.3e}")
    return EXIT_OK


# ---- sweep ----
def cmd_sweep(args: argparse.Namespace) -> int:
    plan = load_plan(args.plan)
    if args.workers:
        plan.workers = args.workers
    report = SweepCoordinator(plan).run()
    _report(
        f"Sweep {plan.output_dir}: {len(report.computed)} cells computed, {len(report.skipped)} skipped, "
        f"analysis {'skipped' if report.analysis_skipped else 'updated'}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chargelearn", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    parser.add_argument("-q", "--quiet", action="store_true", help="errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", help="generate measurement records")
    generate.add_argument("--engine", choices=[ENGINE_QUANTUM, ENGINE_SEP], default=ENGINE_QUANTUM)
    generate.add_argument("--sampler", choices=[SAMPLER_MARGINAL, SAMPLER_MARKOV], default=SAMPLER_MARGINAL)
    generate.add_argument("--task", choices=[TASK_PAIR, TASK_ALL], default=TASK_PAIR)
    generate.add_argument("--L", type=_positive, required=True)
    generate.add_argument("--tf", type=_positive, default=None, help="time steps (default L)")
    generate.add_argument("--p", type=_rate, required=True)
    generate.add_argument("--init", choices=[INIT_DICKE, INIT_NEEL, INIT_PLUS], default=INIT_DICKE)
    generate.add_argument("--labels", type=_int_list, default=None, help="charges, e.g. 4,3 (default L/2,L/2-1)")
    generate.add_argument("--n", type=_positive, required=True, help="records per class")
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--with-gates", action="store_true")
    generate.add_argument("--workers", type=_positive, default=None)
    generate.add_argument("--out", type=Path, required=True)
    generate.set_defaults(handler=cmd_generate)

    decode = commands.add_parser("decode", help="decode a record file")
    decode.add_argument("--records", type=Path, required=True)
    decode.add_argument("--mode", choices=[mode.value for mode in BiasMode], default=BiasMode.UNBIASED.value)
    decode.add_argument("--backend", choices=[BACKEND_DENSE, BACKEND_MPS], default=BACKEND_MPS)
    decode.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    decode.add_argument("--labels", type=_label_spec, default=TASK_PAIR, help="pair, all, or e.g. 4,3")
    decode.add_argument("--init-vector", choices=[INIT_VECTOR_MATCHED, INIT_VECTOR_DICKE], default=INIT_VECTOR_MATCHED)
    decode.add_argument("--workers", type=_positive, default=None)
    decode.add_argument("--out", type=Path, required=True)
    decode.set_defaults(handler=cmd_decode)

    analyze = commands.add_parser("analyze", help="summarise decoder results")
    analyze.add_argument("--results", type=Path, nargs="+", required=True)
    analyze.add_argument("--group-by", default=",".join(GROUP_FIELDS))
    analyze.add_argument("--boot", type=_positive, default=DEFAULT_BOOTSTRAP)
    analyze.add_argument("--bins", type=_positive, default=DEFAULT_HIST_BINS)
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--no-plots", action="store_true")
    analyze.add_argument("--out-dir", type=Path, required=True)
    analyze.set_defaults(handler=cmd_analyze)

    percolate = commands.add_parser("percolate", help="charge cuts from constraint propagation")
    percolate.add_argument("--records", type=Path, required=True)
    percolate.add_argument("--results", type=Path, default=None, help="decoder results for the sharpness check")
    percolate.add_argument("--boot", type=_positive, default=DEFAULT_BOOTSTRAP)
    percolate.add_argument("--seed", type=int, default=0)
    percolate.add_argument("--workers", type=_positive, default=None)
    percolate.add_argument("--out", type=Path, required=True)
    percolate.set_defaults(handler=cmd_percolate)

    verify = commands.add_parser("verify", help="consistency checks")
    checks = verify.add_subparsers(dest="check", required=True)

    haar = checks.add_parser("haar-average", help="doubled gate channel against the exclusion process")
    haar.add_argument("--n", type=_positive, default=100_000)
    haar.add_argument("--seed", type=int, default=0)
    haar.add_argument("--haar", action="store_true", help="draw the charge-1 block from Haar U(2)")
    haar.add_argument("--tolerance", type=float, default=HAAR_TOLERANCE)
    haar.set_defaults(handler=cmd_verify_haar)

    born = checks.add_parser("born-equivalence", help="averaged quantum probability of one record")
    born.add_argument("--L", type=_positive, default=4)
    born.add_argument("--tf", type=_positive, default=2)
    born.add_argument("--p", type=_rate, default=0.3)
    born.add_argument("--labels", type=_int_list, default=None)
    born.add_argument("--n", type=_positive, default=100_000)
    born.add_argument("--seed", type=int, default=0)
    born.set_defaults(handler=cmd_verify_born)

    enumeration = checks.add_parser("enumeration", help="outcome probabilities sum to one")
    enumeration.add_argument("--L", type=_positive, default=4)
    enumeration.add_argument("--tf", type=_positive, default=2)
    enumeration.add_argument("--p", type=_rate, default=None, help="thin placements at this rate (default all)")
    enumeration.add_argument("--samples", type=int, default=0, help="also compare the model sampler")
    enumeration.add_argument("--sampler", choices=[SAMPLER_MARGINAL, SAMPLER_MARKOV], default=SAMPLER_MARGINAL)
    enumeration.add_argument("--seed", type=int, default=0)
    enumeration.set_defaults(handler=cmd_verify_enumeration)

    sweep = commands.add_parser("sweep", help="run a TOML sweep plan")
    sweep.add_argument("plan", type=Path)
    sweep.add_argument("--workers", type=_positive, default=None)
    sweep.set_defaults(handler=cmd_sweep)
    return parser


def run(args: argparse.Namespace, handler: Callable[[argparse.Namespace], int]) -> int:
    """Run a handler and map its failure to an exit code."""
    try:
        if hasattr(args, "workers") and args.workers is None and args.command != "sweep":
            args.workers = default_workers()
        return handler(args)
    except ChargeLearnError as ex:
        _LOGGER.error("%s failed: %s", args.command, ex)
        return ex.exit_code
    except KeyError as ex:
        _LOGGER.error("Missing required value in %s: %s", args.command, ex)
        return EXIT_USAGE
    except (ValueError, TypeError) as ex:
        _LOGGER.error("Invalid value in %s: %s", args.command, ex)
        return EXIT_USAGE
    except OSError as ex:
        _LOGGER.error("I/O error in %s: %s", args.command, ex)
        return EXIT_IO
    except Exception:
        _LOGGER.exception("Unexpected error in %s", args.command)
        return EXIT_IO


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    return run(args, args.handler)


if __name__ == "__main__":
    sys.exit(main())
