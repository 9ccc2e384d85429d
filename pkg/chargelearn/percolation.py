"""Charge inference from measurement records alone.

Each site's history is split into segments by the gates acting on it; segment k of
site i lies between its (k-1)-th and k-th gate. Measured values seed the segments,
per-gate charge conservation (in_1 + in_2 = out_1 + out_2) propagates them, and a
space-like cut of known segments that no gate straddles reveals the total charge.
"""
from __future__ import annotations

from collections import defaultdict, deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from itertools import product
import logging

import numpy as np

from .const import DEFAULT_BOOTSTRAP
from .core import derive_stream_seed
from .exceptions import CorruptedRecord, InvalidArgument
from .models import CircuitLayout, MeasurementRecord
from .stats import bootstrap_ci

_LOGGER = logging.getLogger(__name__)

Segment = tuple[int, int]


class Provenance(StrEnum):
    MEASURED = "measured"
    INFERRED = "inferred"


@dataclass(frozen=True, slots=True)
class GateLegs:
    """Segments entering and leaving one gate on (left, left + 1)."""

    half_layer: int
    left: int
    in_left: Segment
    in_right: Segment
    out_left: Segment
    out_right: Segment

    @property
    def legs(self) -> tuple[Segment, Segment, Segment, Segment]:
        return (self.in_left, self.in_right, self.out_left, self.out_right)


def _conserves(values: Sequence[int]) -> bool:
    return values[0] + values[1] == values[2] + values[3]


@dataclass
class KnownValueGrid:
    layout: CircuitLayout
    gate_rounds: list[list[int]]
    values: dict[Segment, int] = field(default_factory=dict)
    provenance: dict[Segment, Provenance] = field(default_factory=dict)

    @classmethod
    def empty(cls, layout: CircuitLayout) -> KnownValueGrid:
        return cls(layout, [layout.site_gate_rounds(site) for site in range(layout.n_sites)])

    @property
    def n_sites(self) -> int:
        return self.layout.n_sites

    def n_segments(self, site: int) -> int:
        return len(self.gate_rounds[site]) + 1

    def segment_after(self, site: int, half_layer: int) -> int:
        """Segment holding the site's value after the gates of `half_layer`."""
        return sum(1 for tau in self.gate_rounds[site] if tau <= half_layer)

    def value(self, site: int, segment: int) -> int | None:
        return self.values.get((site, segment))

    def is_known(self, site: int, segment: int) -> bool:
        return (site, segment) in self.values

    @property
    def n_measured(self) -> int:
        return sum(1 for source in self.provenance.values() if source is Provenance.MEASURED)

    @property
    def n_inferred(self) -> int:
        return sum(1 for source in self.provenance.values() if source is Provenance.INFERRED)

    def assign(self, segment: Segment, value: int, source: Provenance) -> bool:
        """Record a value; returns True when it was new. Conflicts raise CorruptedRecord."""
        current = self.values.get(segment)
        if current is not None:
            if current != value:
                raise CorruptedRecord(f"Segment {segment} is both {current} and {value}")
            return False
        self.values[segment] = value
        self.provenance[segment] = source
        return True

    def gates(self) -> list[GateLegs]:
        """Every gate with its four legs, in application order."""
        position = [0] * self.n_sites
        gates = []
        for tau, left in self.layout.placements():
            right = left + 1
            gates.append(
                GateLegs(
                    half_layer=tau,
                    left=left,
                    in_left=(left, position[left]),
                    in_right=(right, position[right]),
                    out_left=(left, position[left] + 1),
                    out_right=(right, position[right] + 1),
                )
            )
            position[left] += 1
            position[right] += 1
        return gates

    def bond_count(self, site: int, segment: int, neighbour: int) -> int:
        """Gates shared with `neighbour` that act on `site` before `segment`."""
        left = min(site, neighbour)
        return sum(1 for tau in self.gate_rounds[site][:segment] if left in self.layout.half_layers[tau])


@dataclass(frozen=True)
class CutResult:
    exists: bool
    cut_times: tuple[int, ...] | None = None
    extracted_charge: int | None = None


def _revise(grid: KnownValueGrid, gate: GateLegs) -> list[Segment]:
    """Narrow the four legs of `gate` to their supported values; returns newly known legs."""
    domains = [(grid.values[leg],) if leg in grid.values else (0, 1) for leg in gate.legs]
    supported = [set() for _ in range(4)]
    for combo in product(*domains):
        if _conserves(combo):
            for index, bit in enumerate(combo):
                supported[index].add(bit)
    if any(not values for values in supported):
        raise CorruptedRecord(
            f"Gate at half-layer {gate.half_layer}, sites ({gate.left}, {gate.left + 1}) violates charge conservation"
        )
    fresh = []
    for leg, values in zip(gate.legs, supported, strict=True):
        if len(values) == 1 and grid.assign(leg, values.pop(), Provenance.INFERRED):
            fresh.append(leg)
    return fresh


def propagate_constraints(record: MeasurementRecord) -> KnownValueGrid:
    """Seed segments from the record's measurements and close under gate conservation."""
    grid = KnownValueGrid.empty(record.layout)
    for event in record.events:
        grid.assign((event.site, grid.segment_after(event.site, event.half_layer)), event.outcome, Provenance.MEASURED)

    gates = grid.gates()
    touching: dict[Segment, list[int]] = defaultdict(list)
    for index, gate in enumerate(gates):
        for leg in gate.legs:
            touching[leg].append(index)

    queue = deque(sorted({index for segment in grid.values for index in touching[segment]}))
    queued = set(queue)
    while queue:
        index = queue.popleft()
        queued.discard(index)
        for segment in _revise(grid, gates[index]):
            for neighbour in touching[segment]:
                if neighbour not in queued:
                    queue.append(neighbour)
                    queued.add(neighbour)

    _LOGGER.debug(
        "Record %d: %d measured, %d inferred segments", record.record_seed, grid.n_measured, grid.n_inferred
    )
    return grid


def find_charge_cut(grid: KnownValueGrid, layout: CircuitLayout | None = None) -> CutResult:
    """Leftmost-earliest known space-like cut, or exists=False.

    Segments k at site i and k' at site i + 1 are compatible when both have seen the
    same number of gates on their shared bond.
    """
    layout = layout or grid.layout
    if layout != grid.layout:
        raise InvalidArgument("Grid was built on a different layout")
    L = layout.n_sites

    reachable: list[dict[int, int | None]] = [{} for _ in range(L)]
    for segment in range(grid.n_segments(0)):
        if grid.is_known(0, segment):
            reachable[0][segment] = None
    for site in range(1, L):
        by_count: dict[int, int] = {}
        for previous in reachable[site - 1]:
            by_count.setdefault(grid.bond_count(site - 1, previous, site), previous)
        for segment in range(grid.n_segments(site)):
            if not grid.is_known(site, segment):
                continue
            previous = by_count.get(grid.bond_count(site, segment, site - 1))
            if previous is not None:
                reachable[site][segment] = previous
        if not reachable[site]:
            return CutResult(exists=False)
    if not reachable[L - 1]:
        return CutResult(exists=False)

    cut = [0] * L
    cut[L - 1] = min(reachable[L - 1])
    for site in range(L - 1, 0, -1):
        cut[site - 1] = reachable[site][cut[site]]
    charge = sum(grid.values[(site, segment)] for site, segment in enumerate(cut))
    return CutResult(exists=True, cut_times=tuple(cut), extracted_charge=charge)


@dataclass
class PercolationOutcome:
    """Per-record percolation columns."""

    record_seed: int
    n_sites: int
    n_timesteps: int
    p: float | None
    true_label: int | None
    n_measured: int
    n_inferred: int
    cut: CutResult

    @property
    def cut_charge_matches_label(self) -> bool | None:
        if not self.cut.exists or self.true_label is None:
            return None
        return self.cut.extracted_charge == self.true_label


def percolate_record(record: MeasurementRecord) -> PercolationOutcome:
    grid = propagate_constraints(record)
    return PercolationOutcome(
        record_seed=record.record_seed,
        n_sites=record.n_sites,
        n_timesteps=record.layout.n_timesteps,
        p=record.p,
        true_label=record.true_label,
        n_measured=grid.n_measured,
        n_inferred=grid.n_inferred,
        cut=find_charge_cut(grid),
    )


@dataclass
class PercolationRow:
    """Cut statistics of one (L, p) group."""

    n_sites: int
    p: float | None
    n_records: int
    fraction: float
    low: float
    high: float
    match_rate: float | None


def percolation_summary(
    records: Iterable[MeasurementRecord | PercolationOutcome],
    n_boot: int = DEFAULT_BOOTSTRAP,
    seed: int = 0,
) -> list[PercolationRow]:
    """Fraction of records with a charge cut per (L, p), with bootstrap intervals."""
    grouped: dict[tuple[int, float | None], list[PercolationOutcome]] = defaultdict(list)
    for item in records:
        outcome = item if isinstance(item, PercolationOutcome) else percolate_record(item)
        grouped[(outcome.n_sites, outcome.p)].append(outcome)
    if not grouped:
        raise InvalidArgument("No records to summarise")

    rows = []
    ordered = sorted(grouped.items(), key=lambda item: (item[0][0], -1.0 if item[0][1] is None else item[0][1]))
    for index, ((n_sites, p), outcomes) in enumerate(ordered):
        has_cut = np.array([outcome.cut.exists for outcome in outcomes], dtype=float)
        low, high = bootstrap_ci(has_cut, np.mean, n_boot, derive_stream_seed(seed, index))
        matches = [outcome.cut_charge_matches_label for outcome in outcomes]
        checked = [match for match in matches if match is not None]
        rows.append(
            PercolationRow(
                n_sites=n_sites,
                p=p,
                n_records=len(outcomes),
                fraction=float(has_cut.mean()),
                low=low,
                high=high,
                match_rate=float(np.mean(checked)) if checked else None,
            )
        )
        if checked and not all(checked):
            _LOGGER.warning("L=%d p=%s: %d cut charges disagree with the label", n_sites, p, checked.count(False))
    return rows
