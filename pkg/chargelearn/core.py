"""Brickwork layout, U(1) gate parametrization and seed derivation.

Basis convention used everywhere: a bitstring b indexes amplitude/weight vectors with
site 0 as the most significant bit, so reshaping a length-2^L vector to (2,)*L puts
site i on axis i. Inside a two-site block the order is |00>, |01>, |10>, |11>.
"""
from __future__ import annotations

import numpy as np

from .exceptions import InvalidArgument
from .models import CircuitLayout, GateParams

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def build_layout(n_sites: int, n_timesteps: int) -> CircuitLayout:
    """Open-boundary brickwork with two half-layers per timestep."""
    if n_sites < 2:
        raise InvalidArgument(f"Need at least two sites, got {n_sites}")
    if n_timesteps < 1:
        raise InvalidArgument(f"Need at least one timestep, got {n_timesteps}")
    even = tuple(range(0, n_sites - 1, 2))
    odd = tuple(range(1, n_sites - 1, 2))
    half_layers = tuple(even if tau % 2 == 0 else odd for tau in range(2 * n_timesteps))
    return CircuitLayout(n_sites=n_sites, n_timesteps=n_timesteps, half_layers=half_layers)


def build_unitary(gate: GateParams) -> np.ndarray:
    """4x4 U(1)-symmetric unitary U(alpha, rho, psi, chi, xi)."""
    stay = np.sqrt(1.0 - gate.xi)
    hop = np.sqrt(gate.xi)
    unitary = np.zeros((4, 4), dtype=np.complex128)
    unitary[0, 0] = 1.0
    unitary[1, 1] = np.exp(1j * (gate.alpha + gate.psi)) * stay
    unitary[1, 2] = np.exp(1j * (gate.alpha + gate.chi)) * hop
    unitary[2, 1] = -np.exp(1j * (gate.alpha - gate.chi)) * hop
    unitary[2, 2] = np.exp(1j * (gate.alpha - gate.psi)) * stay
    unitary[3, 3] = np.exp(1j * gate.rho)
    return unitary


def hopping_amplitude(unitary: np.ndarray) -> float:
    """h(U) = |<01|U|10>|^2 for any two-site gate."""
    unitary = np.asarray(unitary)
    if unitary.shape != (4, 4):
        raise InvalidArgument(f"Expected a 4x4 gate, got shape {unitary.shape}")
    return float(abs(unitary[1, 2]) ** 2)


def hopping_probability(gate: GateParams) -> float:
    """h(U(g)); equals xi for every choice of phases."""
    return float(gate.xi)


def _splitmix64(value: int) -> int:
    value = (value + _GOLDEN_GAMMA) & _MASK64
    value = ((value ^ (value >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    value = ((value ^ (value >> 27)) * 0x94D049BB133111EB) & _MASK64
    return value ^ (value >> 31)


def derive_stream_seed(master_seed: int, stream_id: int) -> int:
    """64-bit seed for stream `stream_id` of `master_seed`.

    The master seed is mixed first, then the stream id is added as a multiple of an odd
    constant and mixed again. Both mixes are bijections on 64-bit words, so distinct
    stream ids under one master never collide.
    """
    base = _splitmix64(master_seed & _MASK64)
    return _splitmix64((base + (stream_id & _MASK64) * _GOLDEN_GAMMA) & _MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & _MASK64)
