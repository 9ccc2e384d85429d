"""Statevector simulation of the monitored U(1) brickwork circuit."""
from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache
import logging
import math

import numpy as np
from scipy.stats import unitary_group

from .const import INIT_DICKE, INIT_NEEL, INIT_NEEL_FLIP, INIT_PLUS, MAX_QUANTUM_SITES, NORM_TOL
from .core import build_layout, build_unitary
from .exceptions import InvalidArgument, StateError
from .models import (
    TWO_PI,
    CircuitLayout,
    CircuitRealization,
    ExperimentConfig,
    GateParams,
    InitKind,
    MeasurementEvent,
    MeasurementRecord,
)

_LOGGER = logging.getLogger(__name__)

GateHook = Callable[[int, int], GateParams | None]


@dataclass
class QuantumState:
    """Normalised amplitudes over 2^L bitstrings (site 0 most significant).

    Operations in this module update `amplitudes` in place and return the same object.
    """

    amplitudes: np.ndarray
    n_sites: int

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> QuantumState:
        return QuantumState(self.amplitudes.copy(), self.n_sites)


@lru_cache(maxsize=32)
def basis_charges(n_sites: int) -> np.ndarray:
    """Total charge of every basis index, read-only."""
    index = np.arange(2**n_sites, dtype=np.int64)
    charges = np.zeros(2**n_sites, dtype=np.int64)
    for bit in range(n_sites):
        charges += (index >> bit) & 1
    charges.setflags(write=False)
    return charges


def neel_index(n_sites: int, flipped: bool = False) -> int:
    """Basis index of 1010... (site 0 occupied); `flipped` empties site 0."""
    index = 0
    for site in range(0, n_sites, 2):
        index |= 1 << (n_sites - 1 - site)
    if flipped:
        index &= ~(1 << (n_sites - 1))
    return index


def _check_sites(n_sites: int) -> None:
    if n_sites < 2:
        raise InvalidArgument(f"Need at least two sites, got {n_sites}")
    if n_sites > MAX_QUANTUM_SITES:
        raise InvalidArgument(f"L={n_sites} exceeds the statevector limit of {MAX_QUANTUM_SITES}")


def init_state(n_sites: int, kind: InitKind) -> QuantumState:
    _check_sites(n_sites)
    kind.validate_for(n_sites)
    amplitudes = np.zeros(2**n_sites, dtype=np.complex128)
    if kind.name == INIT_DICKE:
        mask = basis_charges(n_sites) == kind.charge
        amplitudes[mask] = 1.0 / math.sqrt(math.comb(n_sites, kind.charge))
    elif kind.name in (INIT_NEEL, INIT_NEEL_FLIP):
        amplitudes[neel_index(n_sites, kind.name == INIT_NEEL_FLIP)] = 1.0
    elif kind.name == INIT_PLUS:
        amplitudes[:] = 2.0 ** (-n_sites / 2)
    return QuantumState(amplitudes, n_sites)


def sample_gate_params(rng: np.random.Generator) -> GateParams:
    """Phases uniform on [0, 2pi), xi uniform on [0, 1)."""
    draws = rng.random(5)
    return GateParams(
        alpha=float(draws[0] * TWO_PI),
        rho=float(draws[1] * TWO_PI),
        psi=float(draws[2] * TWO_PI),
        chi=float(draws[3] * TWO_PI),
        xi=float(draws[4]),
    )


def sample_haar_u1_gate(rng: np.random.Generator) -> np.ndarray:
    """Haar-random gate on each charge block: phases on |00>, |11>, Haar U(2) in between."""
    unitary = np.zeros((4, 4), dtype=np.complex128)
    phases = rng.random(2) * TWO_PI
    unitary[0, 0] = np.exp(1j * phases[0])
    unitary[3, 3] = np.exp(1j * phases[1])
    unitary[1:3, 1:3] = unitary_group.rvs(2, random_state=rng)
    return unitary


def apply_unitary(state: QuantumState, left_site: int, unitary: np.ndarray) -> QuantumState:
    """Apply a 4x4 matrix to sites (left_site, left_site + 1)."""
    L = state.n_sites
    if not 0 <= left_site < L - 1:
        raise InvalidArgument(f"Gate at left site {left_site} does not fit on L={L}")
    view = state.amplitudes.reshape(2**left_site, 4, 2 ** (L - left_site - 2))
    view[...] = np.einsum("ab,ibj->iaj", unitary, view)
    return state


def apply_gate(state: QuantumState, left_site: int, gate: GateParams) -> QuantumState:
    return apply_unitary(state, left_site, build_unitary(gate))


def sector_weights(state: QuantumState) -> np.ndarray:
    """Probability weight of each total charge 0..L."""
    weights = np.abs(state.amplitudes) ** 2
    return np.bincount(basis_charges(state.n_sites), weights=weights, minlength=state.n_sites + 1)


def project_site(state: QuantumState, site: int, outcome: int) -> float:
    """Project `site` onto `outcome` without renormalising; returns the kept weight."""
    L = state.n_sites
    if not 0 <= site < L:
        raise InvalidArgument(f"Site {site} outside [0, {L - 1}]")
    view = state.amplitudes.reshape(2**site, 2, 2 ** (L - site - 1))
    view[:, 1 - outcome, :] = 0.0
    return float(np.vdot(view[:, outcome, :], view[:, outcome, :]).real)


def measure_site(state: QuantumState, site: int, rng: np.random.Generator) -> tuple[int, QuantumState]:
    """Born-rule measurement of q_site; collapses and renormalises `state`."""
    L = state.n_sites
    if not 0 <= site < L:
        raise InvalidArgument(f"Site {site} outside [0, {L - 1}]")
    view = state.amplitudes.reshape(2**site, 2, 2 ** (L - site - 1))
    weight_zero = float(np.vdot(view[:, 0, :], view[:, 0, :]).real)
    weight_one = float(np.vdot(view[:, 1, :], view[:, 1, :]).real)
    total = weight_zero + weight_one
    if total <= 0.0:
        raise StateError("Cannot measure a zero-norm state")
    outcome = 1 if rng.random() * total < weight_one else 0
    kept = weight_one if outcome else weight_zero
    view[:, 1 - outcome, :] = 0.0
    state.amplitudes /= math.sqrt(kept)
    return outcome, state


def measure_global_charge(state: QuantumState, rng: np.random.Generator) -> tuple[int, QuantumState]:
    """Sample the total charge and project onto that sector."""
    weights = sector_weights(state)
    total = float(weights.sum())
    if total <= 0.0:
        raise StateError("Cannot measure a zero-norm state")
    charge = int(np.searchsorted(np.cumsum(weights), rng.random() * total, side="right"))
    charge = min(charge, state.n_sites)
    state.amplitudes[basis_charges(state.n_sites) != charge] = 0.0
    state.amplitudes /= math.sqrt(weights[charge])
    return charge, state


def run_trajectory(
    config: ExperimentConfig,
    record_seed: int,
    gate_hook: GateHook | None = None,
) -> tuple[MeasurementRecord, CircuitRealization, QuantumState]:
    """Generate one Born-rule measurement record.

    The record's RNG stream is consumed in a fixed order: for each half-layer the gate
    draws in pair order, then per site a measurement coin followed (when measured) by the
    outcome draw, and finally the global-charge draw for the plus state. `gate_hook` may
    return fixed parameters for a placement; hooked gates consume no draws.
    """
    L, t_f = config.n_sites, config.n_timesteps
    layout = build_layout(L, t_f)
    rng = np.random.default_rng(record_seed)
    state = init_state(L, config.init_kind)
    gates: dict[tuple[int, int], GateParams] = {}
    events: list[MeasurementEvent] = []

    for tau, layer in enumerate(layout.half_layers):
        for left in layer:
            gate = gate_hook(tau, left) if gate_hook is not None else None
            if gate is None:
                gate = sample_gate_params(rng)
            gates[(tau, left)] = gate
            apply_gate(state, left, gate)
        for site in range(L):
            if rng.random() < config.p:
                outcome, state = measure_site(state, site, rng)
                events.append(MeasurementEvent(tau, site, outcome))

    true_label = config.init_kind.charge_for(L)
    if true_label is None:
        true_label, state = measure_global_charge(state, rng)

    drift = abs(state.norm_squared() - 1.0)
    if drift > NORM_TOL:
        _LOGGER.warning("Norm drifted by %.3e on record seed %d", drift, record_seed)

    realization = CircuitRealization(layout=layout, gates=gates, master_seed=record_seed)
    record = MeasurementRecord(
        layout=layout,
        events=tuple(events),
        init_kind=config.init_kind,
        true_label=true_label,
        record_seed=record_seed,
        gates=realization if config.with_gates else None,
        p=config.p,
    )
    _LOGGER.debug("Trajectory seed=%d: %d events, label %s", record_seed, len(events), true_label)
    return record, realization, state


def born_probability(record: MeasurementRecord, realization: CircuitRealization, kind: InitKind) -> float:
    """||C(m, u)|kind>||^2: the unnormalised probability of the record's outcomes."""
    layout = record.layout
    state = init_state(layout.n_sites, kind)
    rounds = record.events_by_round()
    for tau, layer in enumerate(layout.half_layers):
        for left in layer:
            apply_gate(state, left, realization.gates[(tau, left)])
        for event in rounds.get(tau, ()):
            if project_site(state, event.site, event.outcome) <= 0.0:
                return 0.0
    return state.norm_squared()


def sample_realization(layout: CircuitLayout, rng: np.random.Generator) -> CircuitRealization:
    """Independent gate parameters for every placement, drawn in placement order."""
    gates = {placement: sample_gate_params(rng) for placement in layout.placements()}
    return CircuitRealization(layout=layout, gates=gates)
