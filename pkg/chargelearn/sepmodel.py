"""Symmetric-exclusion statistical-mechanics model of the Haar-averaged circuit.

A record's likelihood given an initial classical distribution |Q) is
(1| prod_t T(m_t) |Q): transfer matrices at every gate placement and diagonal
projectors at every measurement, evolved here on the dense 2^L vector. The MPS
backend in `mps.py` evolves the same operators in reverse from the flat state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import itertools
import logging
import math

import numpy as np

from .const import (
    BORN_MAX_RELATIVE_ERROR,
    BORN_SIGMAS,
    INIT_DICKE,
    INIT_NEEL,
    INIT_NEEL_FLIP,
    INIT_PLUS,
    MARGINAL_TOL,
    MAX_DENSE_SITES,
    SAMPLER_MARGINAL,
    SAMPLER_MARKOV,
    UNBIASED_HOP,
)
from .core import build_layout, build_unitary
from .exceptions import BackendLimitExceeded, InvalidArgument, LayoutMismatch, NumericError
from .models import CircuitLayout, InitKind, MeasurementEvent, MeasurementRecord
from .qsim import (
    basis_charges,
    born_probability,
    neel_index,
    sample_gate_params,
    sample_haar_u1_gate,
    sample_realization,
)

_LOGGER = logging.getLogger(__name__)

HopSchedule = dict[tuple[int, int], float]

SECTOR_PROJECTORS = (
    np.diag([1.0, 0.0, 0.0, 0.0]),
    np.diag([0.0, 1.0, 1.0, 0.0]),
    np.diag([0.0, 0.0, 0.0, 1.0]),
)
_SECTOR_INDICES = ((0,), (1, 2), (3,))


def transfer_matrix(hop: float) -> np.ndarray:
    """Two-site exclusion-process update: a particle crosses the bond with probability `hop`."""
    if not (math.isfinite(hop) and 0.0 <= hop <= 1.0):
        raise InvalidArgument(f"Hop probability {hop} outside [0, 1]")
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0 - hop, hop, 0.0],
            [0.0, hop, 1.0 - hop, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


@dataclass
class ProbabilityState:
    """Dense classical distribution; the represented vector is weights * exp(log_scale)."""

    weights: np.ndarray
    n_sites: int
    log_scale: float = 0.0

    def log_total(self) -> float:
        total = float(self.weights.sum())
        return self.log_scale + math.log(total) if total > 0.0 else -math.inf

    def renormalize(self) -> float:
        """Move the 1-norm into log_scale; returns the norm that was removed."""
        total = float(self.weights.sum())
        if total > 0.0:
            self.weights /= total
            self.log_scale += math.log(total)
        return total


@dataclass(frozen=True, slots=True)
class GateOp:
    left: int
    hop: float


@dataclass(frozen=True, slots=True)
class ProjectorOp:
    site: int
    outcome: int


@dataclass
class RoundOps:
    """Operators of one half-layer: its gates, then the measurements that follow them."""

    gates: list[GateOp] = field(default_factory=list)
    projectors: list[ProjectorOp] = field(default_factory=list)


def _check_dense(n_sites: int) -> None:
    if n_sites > MAX_DENSE_SITES:
        raise BackendLimitExceeded(f"Dense backend holds at most L={MAX_DENSE_SITES}, got {n_sites}")


def resolve_kind(kind: InitKind | int) -> InitKind:
    return InitKind.dicke(kind) if isinstance(kind, int) else kind


def initial_classical_state(n_sites: int, kind: InitKind | int) -> ProbabilityState:
    kind = resolve_kind(kind)
    _check_dense(n_sites)
    kind.validate_for(n_sites)
    weights = np.zeros(2**n_sites)
    if kind.name == INIT_DICKE:
        weights[basis_charges(n_sites) == kind.charge] = 1.0 / math.comb(n_sites, kind.charge)
    elif kind.name in (INIT_NEEL, INIT_NEEL_FLIP):
        weights[neel_index(n_sites, kind.name == INIT_NEEL_FLIP)] = 1.0
    elif kind.name == INIT_PLUS:
        weights[:] = 2.0**-n_sites
    return ProbabilityState(weights, n_sites)


def apply_transfer(state: ProbabilityState, left: int, matrix: np.ndarray) -> None:
    L = state.n_sites
    view = state.weights.reshape(2**left, 4, 2 ** (L - left - 2))
    view[...] = np.einsum("ab,ibj->iaj", matrix, view)


def apply_projector(state: ProbabilityState, site: int, outcome: int) -> None:
    L = state.n_sites
    view = state.weights.reshape(2**site, 2, 2 ** (L - site - 1))
    view[:, 1 - outcome, :] = 0.0


def check_schedule(layout: CircuitLayout, hops: HopSchedule | None) -> None:
    if hops is None:
        return
    if set(hops) != set(layout.placements()):
        raise LayoutMismatch("Hop schedule does not cover exactly the layout's gate placements")
    for placement, hop in hops.items():
        if not 0.0 <= hop <= 1.0:
            raise InvalidArgument(f"Hop {hop} at {placement} outside [0, 1]")


def record_operators(record: MeasurementRecord, hops: HopSchedule | None = None) -> list[RoundOps]:
    """Forward-ordered operators of a record, one RoundOps per half-layer."""
    layout = record.layout
    check_schedule(layout, hops)
    rounds = record.events_by_round()
    ops = []
    for tau, layer in enumerate(layout.half_layers):
        gates = [GateOp(left, UNBIASED_HOP if hops is None else hops[(tau, left)]) for left in layer]
        projectors = [ProjectorOp(event.site, event.outcome) for event in rounds.get(tau, ())]
        ops.append(RoundOps(gates, projectors))
    return ops


def evolve_dense_likelihood(
    record: MeasurementRecord,
    kind: InitKind | int,
    hops: HopSchedule | None = None,
) -> float:
    """log P(record | kind) on the full 2^L probability vector."""
    state = initial_classical_state(record.n_sites, kind)
    for round_ops in record_operators(record, hops):
        for gate in round_ops.gates:
            apply_transfer(state, gate.left, transfer_matrix(gate.hop))
        for projector in round_ops.projectors:
            apply_projector(state, projector.site, projector.outcome)
        if state.renormalize() <= 0.0:
            return -math.inf
    return state.log_total()


def _sample_initial_configuration(n_sites: int, kind: InitKind, rng: np.random.Generator) -> np.ndarray:
    config = np.zeros(n_sites, dtype=np.int8)
    if kind.name == INIT_DICKE:
        config[rng.choice(n_sites, size=kind.charge, replace=False)] = 1
    elif kind.name in (INIT_NEEL, INIT_NEEL_FLIP):
        config[0::2] = 1
        if kind.name == INIT_NEEL_FLIP:
            config[0] = 0
    else:
        config[:] = rng.random(n_sites) < 0.5
    return config


def sample_record_from_model(
    n_sites: int,
    n_timesteps: int,
    p: float,
    kind: InitKind | int,
    rng: np.random.Generator,
    hops: HopSchedule | None = None,
    *,
    placements: set[tuple[int, int]] | None = None,
    with_trajectory: bool = False,
    sampler: str | None = None,
    record_seed: int = 0,
) -> tuple[MeasurementRecord, np.ndarray | None]:
    """Draw a record from P(m | kind) of the exclusion-process model.

    `sampler="marginal"` filters the dense distribution forward and draws each outcome
    from its marginal. `sampler="markov"` simulates particle trajectories directly and
    can return them as an array of shape (2 t_f + 1, L): row 0 is the initial
    configuration and row tau + 1 the configuration after the gates of half-layer tau.
    Both produce the same record distribution. `placements` fixes which (round, site)
    points are measured instead of flipping a p-coin for each.
    """
    kind = resolve_kind(kind)
    kind.validate_for(n_sites)
    if not 0.0 <= p <= 1.0:
        raise InvalidArgument(f"Measurement probability p={p} outside [0, 1]")
    sampler = sampler or (SAMPLER_MARKOV if with_trajectory else SAMPLER_MARGINAL)
    if with_trajectory and sampler != SAMPLER_MARKOV:
        raise InvalidArgument("Only the markov sampler emits trajectories")
    layout = build_layout(n_sites, n_timesteps)
    check_schedule(layout, hops)

    def measured(tau: int, site: int) -> bool:
        if placements is not None:
            return (tau, site) in placements
        return bool(rng.random() < p)

    def hop_of(tau: int, left: int) -> float:
        return UNBIASED_HOP if hops is None else hops[(tau, left)]

    events: list[MeasurementEvent] = []
    trajectory = None
    if sampler == SAMPLER_MARKOV:
        config = _sample_initial_configuration(n_sites, kind, rng)
        rows = [config.copy()]
        for tau, layer in enumerate(layout.half_layers):
            for left in layer:
                if rng.random() < hop_of(tau, left):
                    config[left], config[left + 1] = config[left + 1], config[left]
            for site in range(n_sites):
                if measured(tau, site):
                    events.append(MeasurementEvent(tau, site, int(config[site])))
            rows.append(config.copy())
        true_label = int(config.sum())
        if with_trajectory:
            trajectory = np.array(rows)
    elif sampler == SAMPLER_MARGINAL:
        state = initial_classical_state(n_sites, kind)
        for tau, layer in enumerate(layout.half_layers):
            for left in layer:
                apply_transfer(state, left, transfer_matrix(hop_of(tau, left)))
            for site in range(n_sites):
                if not measured(tau, site):
                    continue
                view = state.weights.reshape(2**site, 2, 2 ** (n_sites - site - 1))
                total = float(state.weights.sum())
                marginal = float(view[:, 1, :].sum()) / total
                if not -MARGINAL_TOL <= marginal <= 1.0 + MARGINAL_TOL:
                    raise NumericError(
                        f"Marginal {marginal} outside [0, 1]",
                        {"round": tau, "site": site, "total": total},
                    )
                marginal = min(max(marginal, 0.0), 1.0)
                outcome = 1 if rng.random() < marginal else 0
                apply_projector(state, site, outcome)
                state.renormalize()
                events.append(MeasurementEvent(tau, site, outcome))
        true_label = kind.charge_for(n_sites)
        if true_label is None:
            sectors = np.bincount(basis_charges(n_sites), weights=state.weights, minlength=n_sites + 1)
            cumulative = np.cumsum(sectors)
            true_label = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
            true_label = min(true_label, n_sites)
    else:
        raise InvalidArgument(f"Unknown sampler: {sampler}")

    record = MeasurementRecord(
        layout=layout,
        events=tuple(events),
        init_kind=kind,
        true_label=true_label,
        record_seed=record_seed,
        p=p,
    )
    return record, trajectory


def enumerate_outcome_probabilities(
    layout: CircuitLayout,
    placements: set[tuple[int, int]],
    kind: InitKind | int,
    hops: HopSchedule | None = None,
) -> dict[tuple[int, ...], float]:
    """P(outcomes | kind) for every outcome assignment with nonzero probability.

    Outcome tuples follow the canonical (round, site) order of `placements`. Branches are
    split at each measurement during one forward pass, so impossible prefixes are pruned.
    """
    kind = resolve_kind(kind)
    check_schedule(layout, hops)
    L = layout.n_sites
    ordered = sorted(placements)
    by_round: dict[int, list[int]] = {}
    for tau, site in ordered:
        by_round.setdefault(tau, []).append(site)

    branches: list[tuple[tuple[int, ...], ProbabilityState]] = [((), initial_classical_state(L, kind))]
    for tau, layer in enumerate(layout.half_layers):
        for _, state in branches:
            for left in layer:
                hop = UNBIASED_HOP if hops is None else hops[(tau, left)]
                apply_transfer(state, left, transfer_matrix(hop))
        for site in by_round.get(tau, ()):
            split = []
            for outcomes, state in branches:
                for outcome in (0, 1):
                    child = ProbabilityState(state.weights.copy(), L, state.log_scale)
                    apply_projector(child, site, outcome)
                    if child.weights.sum() > 0.0:
                        split.append(((*outcomes, outcome), child))
            branches = split
    return {outcomes: math.exp(state.log_total()) for outcomes, state in branches}


def record_from_outcomes(
    layout: CircuitLayout,
    placements: set[tuple[int, int]],
    outcomes: tuple[int, ...],
    kind: InitKind,
) -> MeasurementRecord:
    pairs = zip(sorted(placements), outcomes, strict=True)
    events = tuple(MeasurementEvent(tau, site, bit) for (tau, site), bit in pairs)
    return MeasurementRecord(layout=layout, events=events, init_kind=kind)


@dataclass
class DoubledChannel:
    """Monte-Carlo average of U (x) U* against the exclusion-process target.

    `restricted[j, k]` is <jj| E[U (x) U*] |kk> = E|U_jk|^2 on the doubled diagonal basis.
    """

    estimate: np.ndarray
    restricted: np.ndarray
    target: np.ndarray
    n_samples: int
    projectors: tuple[np.ndarray, np.ndarray, np.ndarray] = SECTOR_PROJECTORS

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.restricted - self.target)))

    def sector_deviation(self, charge: int) -> float:
        idx = _SECTOR_INDICES[charge]
        block = np.ix_(idx, idx)
        return float(np.max(np.abs(self.restricted[block] - self.target[block])))

    def off_block_weight(self) -> float:
        """Largest |E|U_jk|^2| between different charge sectors; zero for U(1) gates."""
        mask = np.ones((4, 4), dtype=bool)
        for idx in _SECTOR_INDICES:
            mask[np.ix_(idx, idx)] = False
        return float(np.max(np.abs(self.restricted[mask])))


def verify_doubled_channel(n_samples: int, rng: np.random.Generator, haar: bool = False) -> DoubledChannel:
    """Average U (x) U* over sampled gates and compare with transfer_matrix(1/2).

    `haar=True` draws the charge-1 block from the Haar measure on U(2) instead of the
    (alpha, rho, psi, chi, xi) parametrisation.
    """
    if n_samples < 1:
        raise InvalidArgument("Need at least one sample")
    total = np.zeros((16, 16), dtype=np.complex128)
    for _ in range(n_samples):
        unitary = sample_haar_u1_gate(rng) if haar else build_unitary(sample_gate_params(rng))
        total += np.kron(unitary, unitary.conj())
    estimate = total / n_samples
    diagonal = [4 * j + j for j in range(4)]
    restricted = estimate[np.ix_(diagonal, diagonal)].real
    channel = DoubledChannel(estimate, restricted, transfer_matrix(UNBIASED_HOP), n_samples)
    _LOGGER.info("Doubled channel over %d gates: max deviation %.4g", n_samples, channel.max_deviation)
    return channel


@dataclass
class BornEquivalenceReport:
    """Haar-averaged quantum probability of one record vs its exclusion-process likelihood."""

    sep_probability: float
    quantum_mean: float
    standard_error: float
    n_samples: int
    verdict: str

    @property
    def z_score(self) -> float:
        if self.standard_error == 0.0:
            return 0.0 if self.quantum_mean == self.sep_probability else math.inf
        return (self.quantum_mean - self.sep_probability) / self.standard_error


def born_equivalence(
    record: MeasurementRecord,
    kind: InitKind | int,
    n_samples: int,
    rng: np.random.Generator,
) -> BornEquivalenceReport:
    """Monte-Carlo check that E_u ||C(m, u)|kind>||^2 equals the dense likelihood."""
    kind = resolve_kind(kind)
    if n_samples < 2:
        raise InvalidArgument("Need at least two realizations for a standard error")
    probabilities = np.empty(n_samples)
    for index in range(n_samples):
        probabilities[index] = born_probability(record, sample_realization(record.layout, rng), kind)
    mean = float(probabilities.mean())
    standard_error = float(probabilities.std(ddof=1) / math.sqrt(n_samples))
    sep = math.exp(evolve_dense_likelihood(record, kind))

    if sep == 0.0:
        verdict = "pass" if mean == 0.0 else "fail"
    elif standard_error / sep > BORN_MAX_RELATIVE_ERROR:
        verdict = "inconclusive"
    elif abs(mean - sep) <= BORN_SIGMAS * standard_error:
        verdict = "pass"
    else:
        verdict = "fail"
    _LOGGER.info(
        "Born equivalence for %s: quantum %.6g +- %.2g vs SEP %.6g (%s)", kind, mean, standard_error, sep, verdict
    )
    return BornEquivalenceReport(sep, mean, standard_error, n_samples, verdict)


def all_placements(layout: CircuitLayout) -> set[tuple[int, int]]:
    return set(itertools.product(range(layout.n_rounds), range(layout.n_sites)))
