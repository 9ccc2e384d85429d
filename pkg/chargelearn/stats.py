"""Estimators, Binder ratios, histograms and crossing analysis."""
from __future__ import annotations

from collections import defaultdict
from collections.abc import Callable, Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from itertools import combinations
import logging
import math

import numpy as np
from scipy.special import erf

from .const import (
    CONFIDENCE_LEVEL,
    DEFAULT_BOOTSTRAP,
    DEFAULT_CROSSING_RESAMPLES,
    DEFAULT_HIST_BINS,
    DEFAULT_TAIL_EPS,
)
from .core import derive_stream_seed
from .exceptions import DegenerateDistribution, InvalidArgument
from .models import DecodeResult

_LOGGER = logging.getLogger(__name__)

# (p, value, error)
CurvePoint = tuple[float, float, float]


@dataclass(frozen=True, order=True)
class GroupKey:
    n_sites: int
    p: float
    bias_mode: str
    task: str


@dataclass
class SampleSet:
    """Per-record decoder statistics of one (L, p, mode, task) group."""

    key: GroupKey
    n_timesteps: int
    p_corr: np.ndarray
    entropy_bits: np.ndarray
    correct: np.ndarray
    confidence: np.ndarray
    collision: np.ndarray
    n_labels: int = 2
    naive_correct: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.p_corr = np.asarray(self.p_corr, dtype=float)
        self.entropy_bits = np.asarray(self.entropy_bits, dtype=float)
        self.correct = np.asarray(self.correct, dtype=bool)
        self.confidence = np.asarray(self.confidence, dtype=float)
        self.collision = np.asarray(self.collision, dtype=float)
        n = len(self.p_corr)
        for name in ("entropy_bits", "correct", "confidence", "collision"):
            if len(getattr(self, name)) != n:
                raise InvalidArgument(f"Sample column {name} has a different length")
        if self.naive_correct is not None:
            self.naive_correct = np.asarray(self.naive_correct, dtype=bool)
            if len(self.naive_correct) != n:
                raise InvalidArgument("Sample column naive_correct has a different length")
        slack = 1e-9
        if np.any((self.p_corr < -slack) | (self.p_corr > 1 + slack)):
            raise InvalidArgument(f"P_corr outside [0, 1] in group {self.key}")
        if np.any((self.confidence < -slack) | (self.confidence > 1 + slack)):
            raise InvalidArgument(f"Confidence outside [0, 1] in group {self.key}")
        if np.any((self.entropy_bits < -slack) | (self.entropy_bits > math.log2(max(self.n_labels, 2)) + slack)):
            raise InvalidArgument(f"Entropy outside its range in group {self.key}")

    def __len__(self) -> int:
        return len(self.p_corr)


@dataclass
class SummaryRow:
    key: GroupKey
    n_samples: int
    accuracy: float
    accuracy_low: float
    accuracy_high: float
    theoretical_accuracy: float
    mean_entropy: float
    entropy_low: float
    entropy_high: float
    order_param: float
    mean_collision: float
    tail_weight: float
    lower_bound: float
    binder_pcorr: float | None
    binder_pcorr_err: float | None
    binder_entropy: float | None
    binder_entropy_err: float | None
    binder_confidence: float | None
    binder_confidence_err: float | None
    binder_correct: float | None
    binder_correct_err: float | None
    naive_accuracy: float | None = None


@dataclass
class DistributionReport:
    edges: np.ndarray
    counts: np.ndarray
    cdf: np.ndarray
    tail_eps: float
    tail_weight: float

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class CrossingEstimate:
    p_star: float
    low: float
    high: float
    n_resamples: int


@dataclass(frozen=True)
class CrossingRow:
    bias_mode: str
    task: str
    observable: str
    size_a: int
    size_b: int
    estimate: CrossingEstimate


@dataclass
class CalibrationBin:
    low: float
    high: float
    count: int
    mean_confidence: float
    accuracy: float
    sigma: float

    @property
    def consistent(self) -> bool:
        """Empirical accuracy within binomial 3 sigma of the mean confidence."""
        if self.count == 0:
            return True
        return abs(self.accuracy - self.mean_confidence) <= 3.0 * self.sigma + 1.0 / self.count


def lower_bound_accuracy(p: float, n_timesteps: int, n_sites: int) -> float:
    """Accuracy of thresholding the mean measured charge: 1/2 (1 + erf sqrt(p t_f / L))."""
    if not 0.0 <= p <= 1.0:
        raise InvalidArgument(f"p={p} outside [0, 1]")
    if n_timesteps < 1 or n_sites < 1:
        raise InvalidArgument("t_f and L must be positive")
    return float(0.5 * (1.0 + erf(math.sqrt(p * n_timesteps / n_sites))))


def binder_ratio(samples: Sequence[float] | np.ndarray) -> float:
    """Kurtosis mu_4 / mu_2^2 of the centred samples."""
    values = np.asarray(samples, dtype=float)
    if values.size < 2:
        raise DegenerateDistribution("Binder ratio needs at least two samples")
    centred = values - values.mean()
    mu2 = float(np.mean(centred**2))
    if mu2 <= 1e-300 or np.ptp(values) == 0.0:
        raise DegenerateDistribution("Binder ratio of a zero-variance sample")
    return float(np.mean(centred**4) / mu2**2)


def bootstrap_ci(
    values: Sequence[float] | np.ndarray,
    statistic: Callable[[np.ndarray], float] = np.mean,
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
    level: float = CONFIDENCE_LEVEL,
) -> tuple[float, float]:
    """Percentile bootstrap interval of `statistic`.

    Resamples whose statistic is undefined (degenerate) are dropped; if none survive
    the interval is (nan, nan).
    """
    data = np.asarray(values)
    if data.size == 0:
        raise InvalidArgument("Cannot bootstrap an empty sample")
    if n_boot < 1:
        raise InvalidArgument("n_boot must be positive")
    rng = np.random.default_rng(seed)
    estimates = []
    for _ in range(n_boot):
        resample = data[rng.integers(0, data.size, size=data.size)]
        try:
            estimates.append(float(statistic(resample)))
        except DegenerateDistribution:
            continue
    estimates_arr = np.array([value for value in estimates if math.isfinite(value)])
    if estimates_arr.size == 0:
        return math.nan, math.nan
    alpha = (1.0 - level) / 2.0
    low, high = np.percentile(estimates_arr, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return float(low), float(high)


def accuracy_with_ci(
    correct: Sequence[bool] | np.ndarray, n_boot: int = DEFAULT_BOOTSTRAP, seed: int = 0
) -> tuple[float, tuple[float, float]]:
    values = np.asarray(correct, dtype=float)
    if values.size == 0:
        raise InvalidArgument("Accuracy of an empty sample")
    return float(values.mean()), bootstrap_ci(values, np.mean, n_boot, seed)


def distribution_report(
    samples: Sequence[float] | np.ndarray,
    n_bins: int = DEFAULT_HIST_BINS,
    tail_eps: float = DEFAULT_TAIL_EPS,
) -> DistributionReport:
    """Histogram on [0, 1], its cumulative distribution, and P(x < tail_eps)."""
    values = np.asarray(samples, dtype=float)
    if n_bins < 2:
        raise InvalidArgument("Need at least two bins")
    if values.size == 0:
        raise InvalidArgument("Histogram of an empty sample")
    if np.any((values < 0.0) | (values > 1.0)) or not np.all(np.isfinite(values)):
        raise InvalidArgument("Histogram samples must lie in [0, 1]")
    counts, edges = np.histogram(values, bins=n_bins, range=(0.0, 1.0))
    cdf = np.cumsum(counts) / values.size
    cdf[-1] = 1.0
    return DistributionReport(
        edges=edges,
        counts=counts,
        cdf=cdf,
        tail_eps=tail_eps,
        tail_weight=float(np.mean(values < tail_eps)),
    )


def _check_curves(curve_a: Sequence[CurvePoint], curve_b: Sequence[CurvePoint]) -> np.ndarray:
    if len(curve_a) < 2 or len(curve_b) < 2:
        raise InvalidArgument("Crossing needs at least two points per curve")
    grid_a = np.array([point[0] for point in curve_a], dtype=float)
    grid_b = np.array([point[0] for point in curve_b], dtype=float)
    if grid_a.shape != grid_b.shape or not np.allclose(grid_a, grid_b, rtol=0.0, atol=1e-12):
        raise InvalidArgument("Curves are not on a common p grid")
    if np.any(np.diff(grid_a) <= 0):
        raise InvalidArgument("p grid must be strictly ascending")
    return grid_a


def _first_crossing(grid: np.ndarray, difference: np.ndarray) -> float | None:
    for i, value in enumerate(difference):
        if value == 0.0:
            return float(grid[i])
        if i + 1 < len(difference) and value * difference[i + 1] < 0.0:
            following = difference[i + 1]
            return float(grid[i] + (grid[i + 1] - grid[i]) * value / (value - following))
    return None


def crossing_estimate(
    curve_a: Sequence[CurvePoint],
    curve_b: Sequence[CurvePoint],
    n_resamples: int = DEFAULT_CROSSING_RESAMPLES,
    seed: int = 0,
) -> CrossingEstimate | None:
    """First sign change of A - B with a resampled uncertainty band, or None."""
    grid = _check_curves(curve_a, curve_b)
    values_a = np.array([point[1] for point in curve_a], dtype=float)
    values_b = np.array([point[1] for point in curve_b], dtype=float)
    errors_a = np.abs(np.nan_to_num(np.array([point[2] for point in curve_a], dtype=float)))
    errors_b = np.abs(np.nan_to_num(np.array([point[2] for point in curve_b], dtype=float)))

    p_star = _first_crossing(grid, values_a - values_b)
    if p_star is None:
        return None

    rng = np.random.default_rng(seed)
    resampled = []
    for _ in range(n_resamples):
        draw_a = values_a + errors_a * rng.standard_normal(values_a.size)
        draw_b = values_b + errors_b * rng.standard_normal(values_b.size)
        crossing = _first_crossing(grid, draw_a - draw_b)
        if crossing is not None:
            resampled.append(crossing)
    if not resampled:
        return CrossingEstimate(p_star, p_star, p_star, 0)
    alpha = (1.0 - CONFIDENCE_LEVEL) / 2.0
    low, high = np.percentile(resampled, [100.0 * alpha, 100.0 * (1.0 - alpha)])
    return CrossingEstimate(p_star, float(min(low, p_star)), float(max(high, p_star)), len(resampled))


def _binder_with_error(values: np.ndarray, n_boot: int, seed: int) -> tuple[float | None, float | None]:
    try:
        value = binder_ratio(values)
    except DegenerateDistribution:
        return None, None
    low, high = bootstrap_ci(values, binder_ratio, n_boot, seed)
    if math.isnan(low):
        return value, None
    return value, (high - low) / 2.0


def summarize(sample_set: SampleSet, n_boot: int = DEFAULT_BOOTSTRAP, seed: int = 0) -> SummaryRow:
    if len(sample_set) == 0:
        raise InvalidArgument(f"Group {sample_set.key} is empty")
    key = sample_set.key
    accuracy, (acc_low, acc_high) = accuracy_with_ci(sample_set.correct, n_boot, derive_stream_seed(seed, 0))
    ent_low, ent_high = bootstrap_ci(sample_set.entropy_bits, np.mean, n_boot, derive_stream_seed(seed, 1))
    b_pcorr, b_pcorr_err = _binder_with_error(sample_set.p_corr, n_boot, derive_stream_seed(seed, 2))
    b_ent, b_ent_err = _binder_with_error(sample_set.entropy_bits, n_boot, derive_stream_seed(seed, 3))
    b_conf, b_conf_err = _binder_with_error(sample_set.confidence, n_boot, derive_stream_seed(seed, 4))
    b_corr, b_corr_err = _binder_with_error(sample_set.correct.astype(float), n_boot, derive_stream_seed(seed, 5))
    naive = None if sample_set.naive_correct is None else float(sample_set.naive_correct.mean())
    return SummaryRow(
        key=key,
        n_samples=len(sample_set),
        accuracy=accuracy,
        accuracy_low=acc_low,
        accuracy_high=acc_high,
        theoretical_accuracy=float(sample_set.confidence.mean()),
        mean_entropy=float(sample_set.entropy_bits.mean()),
        entropy_low=ent_low,
        entropy_high=ent_high,
        order_param=float(1.0 - sample_set.p_corr.mean()),
        mean_collision=float(sample_set.collision.mean()),
        tail_weight=float(np.mean(sample_set.p_corr < DEFAULT_TAIL_EPS)),
        lower_bound=lower_bound_accuracy(key.p, sample_set.n_timesteps, key.n_sites),
        binder_pcorr=b_pcorr,
        binder_pcorr_err=b_pcorr_err,
        binder_entropy=b_ent,
        binder_entropy_err=b_ent_err,
        binder_confidence=b_conf,
        binder_confidence_err=b_conf_err,
        binder_correct=b_corr,
        binder_correct_err=b_corr_err,
        naive_accuracy=naive,
    )


def order_parameter_table(
    sets: Iterable[SampleSet], n_boot: int = DEFAULT_BOOTSTRAP, seed: int = 0
) -> list[SummaryRow]:
    """One SummaryRow per group, sorted by key; group i bootstraps from its own stream."""
    ordered = sorted(sets, key=lambda sample_set: sample_set.key)
    keys = [sample_set.key for sample_set in ordered]
    if len(set(keys)) != len(keys):
        raise InvalidArgument("Duplicate sample-set keys")
    rows = [summarize(sample_set, n_boot, derive_stream_seed(seed, index)) for index, sample_set in enumerate(ordered)]
    _LOGGER.info("Summarised %d groups", len(rows))
    return rows


GROUP_FIELDS = ("L", "p", "mode", "task")


def build_sample_sets(
    results: Iterable[DecodeResult], group_by: Sequence[str] = GROUP_FIELDS
) -> list[SampleSet]:
    """Group decoded records by (L, p, mode, task); mode or task left out of `group_by` pool as "*"."""
    fields = set(group_by)
    if not {"L", "p"} <= fields or not fields <= set(GROUP_FIELDS):
        raise InvalidArgument(f"group_by must contain L and p and only {GROUP_FIELDS}, got {list(group_by)}")
    grouped: dict[GroupKey, list[DecodeResult]] = defaultdict(list)
    for result in results:
        if result.p is None:
            raise InvalidArgument(f"Result {result.record_seed} has no measurement rate to group by")
        if result.outcome.p_corr is None:
            raise InvalidArgument(f"Result {result.record_seed} has no true label")
        key = GroupKey(
            result.n_sites,
            float(result.p),
            str(result.outcome.bias_mode) if "mode" in fields else "*",
            result.task if "task" in fields else "*",
        )
        grouped[key].append(result)

    sets = []
    for key, members in sorted(grouped.items()):
        horizons = {member.n_timesteps for member in members}
        if len(horizons) != 1:
            raise InvalidArgument(f"Group {key} mixes time horizons {sorted(horizons)}")
        naive = [member.naive_correct for member in members]
        sets.append(
            SampleSet(
                key=key,
                n_timesteps=horizons.pop(),
                p_corr=[member.outcome.p_corr for member in members],
                entropy_bits=[member.outcome.entropy_bits for member in members],
                correct=[bool(member.outcome.correct) for member in members],
                confidence=[member.outcome.confidence for member in members],
                collision=[member.outcome.collision for member in members],
                n_labels=max(len(member.outcome.labels) for member in members),
                naive_correct=None if any(value is None for value in naive) else naive,
            )
        )
    return sets


def size_curves(
    rows: Iterable[SummaryRow], value_field: str, error_field: str | None = None
) -> dict[tuple[str, str], dict[int, list[CurvePoint]]]:
    """(mode, task) -> L -> ascending (p, value, error); undefined values are skipped."""
    curves: dict[tuple[str, str], dict[int, list[CurvePoint]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        value = getattr(row, value_field)
        if value is None or not math.isfinite(value):
            continue
        error = getattr(row, error_field) if error_field else 0.0
        curves[(row.key.bias_mode, row.key.task)][row.key.n_sites].append(
            (row.key.p, float(value), float(error) if error is not None else 0.0)
        )
    return {group: {size: sorted(points) for size, points in by_size.items()} for group, by_size in curves.items()}


def find_crossings(
    rows: Sequence[SummaryRow],
    value_field: str,
    error_field: str | None = None,
    n_resamples: int = DEFAULT_CROSSING_RESAMPLES,
    seed: int = 0,
) -> list[CrossingRow]:
    """Pairwise crossings in p of `value_field` curves for every pair of sizes."""
    found = []
    stream = 0
    for (mode, task), by_size in sorted(size_curves(rows, value_field, error_field).items()):
        for size_a, size_b in combinations(sorted(by_size), 2):
            common = sorted({point[0] for point in by_size[size_a]} & {point[0] for point in by_size[size_b]})
            curve_a = [point for point in by_size[size_a] if point[0] in common]
            curve_b = [point for point in by_size[size_b] if point[0] in common]
            stream += 1
            if len(common) < 2:
                continue
            estimate = crossing_estimate(curve_a, curve_b, n_resamples, derive_stream_seed(seed, stream))
            if estimate is None:
                _LOGGER.debug("No %s crossing between L=%d and L=%d (%s, %s)", value_field, size_a, size_b, mode, task)
                continue
            found.append(CrossingRow(mode, task, value_field, size_a, size_b, estimate))
    return found


def calibration_bins(
    confidence: Sequence[float] | np.ndarray,
    correct: Sequence[bool] | np.ndarray,
    n_bins: int = 10,
) -> list[CalibrationBin]:
    """Empirical accuracy against mean predicted confidence, in equal bins on [0, 1]."""
    conf = np.asarray(confidence, dtype=float)
    hits = np.asarray(correct, dtype=float)
    if conf.shape != hits.shape:
        raise InvalidArgument("Confidence and correctness lengths differ")
    if n_bins < 1:
        raise InvalidArgument("Need at least one bin")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    index = np.clip(np.searchsorted(edges, conf, side="right") - 1, 0, n_bins - 1)
    bins = []
    for b in range(n_bins):
        mask = index == b
        count = int(mask.sum())
        if count == 0:
            bins.append(CalibrationBin(float(edges[b]), float(edges[b + 1]), 0, math.nan, math.nan, math.nan))
            continue
        mean_conf = float(conf[mask].mean())
        bins.append(
            CalibrationBin(
                low=float(edges[b]),
                high=float(edges[b + 1]),
                count=count,
                mean_confidence=mean_conf,
                accuracy=float(hits[mask].mean()),
                sigma=math.sqrt(max(mean_conf * (1.0 - mean_conf), 0.0) / count),
            )
        )
    return bins


def empirical_distribution(samples: Iterable[Hashable]) -> dict[Hashable, float]:
    counts: dict[Hashable, int] = defaultdict(int)
    total = 0
    for sample in samples:
        counts[sample] += 1
        total += 1
    if total == 0:
        raise InvalidArgument("Empirical distribution of an empty sample")
    return {key: count / total for key, count in counts.items()}


def total_variation_distance(first: Mapping[Hashable, float], second: Mapping[Hashable, float]) -> float:
    """1/2 sum |P - Q| over the union of supports."""
    keys = set(first) | set(second)
    return 0.5 * float(sum(abs(first.get(key, 0.0) - second.get(key, 0.0)) for key in keys))

