"""Data models for chargelearn."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import StrEnum
import math
import re

from .const import (
    BACKEND_DENSE,
    BACKEND_MPS,
    DEFAULT_THRESHOLD,
    INIT_DICKE,
    INIT_NEEL,
    INIT_NEEL_FLIP,
    INIT_PLUS,
)
from .exceptions import InvalidArgument

TWO_PI = 2.0 * math.pi

_DICKE_RE = re.compile(r"^dicke\((\d+)\)$")


class BiasMode(StrEnum):
    """How much gate knowledge the decoder uses."""

    UNBIASED = "unbiased"
    BIASED = "biased"
    ANTIBIASED = "antibiased"


@dataclass(frozen=True, slots=True)
class InitKind:
    """Initial state: dicke(Q), neel, neel_flip or plus.

    Site 0 of the Neel string 1010... is occupied. neel_flip empties site 0, which gives
    charge L/2 - 1.
    """

    name: str
    charge: int | None = None

    def __post_init__(self) -> None:
        if self.name == INIT_DICKE:
            if self.charge is None or self.charge < 0:
                raise InvalidArgument(f"dicke needs a nonnegative charge, got {self.charge}")
        elif self.name in (INIT_NEEL, INIT_NEEL_FLIP, INIT_PLUS):
            if self.charge is not None:
                raise InvalidArgument(f"{self.name} takes no charge")
        else:
            raise InvalidArgument(f"Unknown init kind: {self.name}")

    def __str__(self) -> str:
        if self.name == INIT_DICKE:
            return f"dicke({self.charge})"
        return self.name

    @classmethod
    def parse(cls, text: str) -> InitKind:
        text = text.strip()
        match = _DICKE_RE.match(text)
        if match:
            return cls(INIT_DICKE, int(match.group(1)))
        return cls(text)

    @classmethod
    def dicke(cls, charge: int) -> InitKind:
        return cls(INIT_DICKE, charge)

    def validate_for(self, n_sites: int) -> None:
        """Raise unless this kind exists on `n_sites` sites."""
        if self.name == INIT_DICKE and not 0 <= self.charge <= n_sites:
            raise InvalidArgument(f"Charge {self.charge} out of range for L={n_sites}")
        if self.name in (INIT_NEEL, INIT_NEEL_FLIP) and n_sites % 2:
            raise InvalidArgument(f"{self.name} needs even L, got {n_sites}")

    def charge_for(self, n_sites: int) -> int | None:
        """Definite total charge, or None for the plus state."""
        if self.name == INIT_DICKE:
            return self.charge
        if self.name == INIT_NEEL:
            return n_sites // 2
        if self.name == INIT_NEEL_FLIP:
            return n_sites // 2 - 1
        return None

    def label_kind(self, n_sites: int, label: int) -> InitKind:
        """Initial kind of the same family that carries charge `label`."""
        if self.name == INIT_PLUS:
            return self
        if self.name in (INIT_NEEL, INIT_NEEL_FLIP):
            if label == n_sites // 2:
                return InitKind(INIT_NEEL)
            if label == n_sites // 2 - 1:
                return InitKind(INIT_NEEL_FLIP)
            raise InvalidArgument(f"Neel family has no state of charge {label} at L={n_sites}")
        return InitKind.dicke(label)


@dataclass(frozen=True, slots=True)
class CircuitLayout:
    """Open-boundary brickwork; half_layers[tau] lists the left sites of its pairs."""

    n_sites: int
    n_timesteps: int
    half_layers: tuple[tuple[int, ...], ...]

    @property
    def n_rounds(self) -> int:
        return len(self.half_layers)

    @property
    def gate_count(self) -> int:
        return sum(len(layer) for layer in self.half_layers)

    def placements(self) -> list[tuple[int, int]]:
        """All (half_layer, left_site) gate placements in application order."""
        return [(tau, left) for tau, layer in enumerate(self.half_layers) for left in layer]

    def site_gate_rounds(self, site: int) -> list[int]:
        """Half-layers in which `site` takes part in a gate, ascending."""
        return [tau for tau, layer in enumerate(self.half_layers) if site in layer or site - 1 in layer]


@dataclass(frozen=True, slots=True)
class GateParams:
    alpha: float
    rho: float
    psi: float
    chi: float
    xi: float

    def __post_init__(self) -> None:
        for name in ("alpha", "rho", "psi", "chi"):
            value = getattr(self, name)
            if not (math.isfinite(value) and 0.0 <= value < TWO_PI):
                raise InvalidArgument(f"Phase {name}={value} outside [0, 2pi)")
        if not (math.isfinite(self.xi) and 0.0 <= self.xi <= 1.0):
            raise InvalidArgument(f"Hop parameter xi={self.xi} outside [0, 1]")


IDENTITY_GATE = GateParams(0.0, 0.0, 0.0, 0.0, 0.0)
SWAP_LIKE_GATE = GateParams(0.0, 0.0, 0.0, 0.0, 1.0)


@dataclass(frozen=True)
class CircuitRealization:
    layout: CircuitLayout
    gates: dict[tuple[int, int], GateParams]
    master_seed: int = 0

    def __post_init__(self) -> None:
        expected = set(self.layout.placements())
        if set(self.gates) != expected:
            missing = len(expected - set(self.gates))
            extra = len(set(self.gates) - expected)
            raise InvalidArgument(f"Realization does not match layout ({missing} missing, {extra} extra)")

    def hops(self) -> dict[tuple[int, int], float]:
        return {placement: gate.xi for placement, gate in self.gates.items()}


@dataclass(frozen=True, order=True, slots=True)
class MeasurementEvent:
    half_layer: int
    site: int
    outcome: int


@dataclass(frozen=True)
class MeasurementRecord:
    """What the eavesdropper sees, plus provenance."""

    layout: CircuitLayout
    events: tuple[MeasurementEvent, ...]
    init_kind: InitKind
    true_label: int | None = None
    record_seed: int = 0
    gates: CircuitRealization | None = None
    p: float | None = None

    def __post_init__(self) -> None:
        L = self.layout.n_sites
        seen: set[tuple[int, int]] = set()
        previous = None
        for event in self.events:
            if not 0 <= event.half_layer < self.layout.n_rounds:
                raise InvalidArgument(f"Event round {event.half_layer} outside layout")
            if not 0 <= event.site < L:
                raise InvalidArgument(f"Event site {event.site} outside [0, {L - 1}]")
            if event.outcome not in (0, 1):
                raise InvalidArgument(f"Outcome must be a bit, got {event.outcome}")
            key = (event.half_layer, event.site)
            if key in seen:
                raise InvalidArgument(f"Duplicate measurement at {key}")
            if previous is not None and key < previous:
                raise InvalidArgument("Events are not in (round, site) order")
            seen.add(key)
            previous = key
        if self.true_label is not None and not 0 <= self.true_label <= L:
            raise InvalidArgument(f"True label {self.true_label} outside [0, {L}]")
        if self.gates is not None and self.gates.layout != self.layout:
            raise InvalidArgument("Gate realization was built on a different layout")

    @property
    def n_sites(self) -> int:
        return self.layout.n_sites

    def events_by_round(self) -> dict[int, list[MeasurementEvent]]:
        rounds: dict[int, list[MeasurementEvent]] = defaultdict(list)
        for event in self.events:
            rounds[event.half_layer].append(event)
        return rounds

    def outcomes(self) -> list[int]:
        return [event.outcome for event in self.events]

    def without_gates(self) -> MeasurementRecord:
        return replace(self, gates=None)


@dataclass
class ExperimentConfig:
    n_sites: int
    n_timesteps: int
    p: float
    n_records: int = 1
    labels: list[int] = field(default_factory=list)
    init_kind: InitKind = field(default_factory=lambda: InitKind.dicke(0))
    master_seed: int = 0
    backend: str = BACKEND_MPS
    bias_mode: BiasMode = BiasMode.UNBIASED
    threshold: float = DEFAULT_THRESHOLD
    with_gates: bool = False

    def __post_init__(self) -> None:
        if self.n_sites < 2 or self.n_timesteps < 1:
            raise InvalidArgument(f"Need L >= 2 and t_f >= 1, got L={self.n_sites}, t_f={self.n_timesteps}")
        if not 0.0 <= self.p <= 1.0:
            raise InvalidArgument(f"Measurement probability p={self.p} outside [0, 1]")
        if self.n_records < 0:
            raise InvalidArgument("n_records must be nonnegative")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidArgument(f"Labels must be distinct: {self.labels}")
        for label in self.labels:
            if not 0 <= label <= self.n_sites:
                raise InvalidArgument(f"Label {label} outside [0, {self.n_sites}]")
        if self.backend not in (BACKEND_DENSE, BACKEND_MPS):
            raise InvalidArgument(f"Unknown backend: {self.backend}")
        self.bias_mode = BiasMode(self.bias_mode)
        self.init_kind.validate_for(self.n_sites)

    def for_label(self, label: int) -> ExperimentConfig:
        """Same experiment started from the family member with charge `label`."""
        return replace(self, init_kind=self.init_kind.label_kind(self.n_sites, label))


@dataclass
class ClassificationOutcome:
    labels: list[int]
    log_likelihoods: list[float]
    posterior: list[float]
    predicted_label: int
    bias_mode: BiasMode = BiasMode.UNBIASED
    backend: str = BACKEND_MPS
    true_label: int | None = None
    p_corr: float | None = None
    entropy_bits: float = 0.0

    @property
    def confidence(self) -> float:
        """Posterior of the predicted label."""
        return max(self.posterior)

    @property
    def collision(self) -> float:
        """Sum of squared posteriors."""
        return float(sum(value * value for value in self.posterior))

    @property
    def correct(self) -> bool | None:
        if self.true_label is None:
            return None
        return self.predicted_label == self.true_label


@dataclass
class DecodeResult:
    """One decoded record as stored in a results file."""

    record_seed: int
    n_sites: int
    n_timesteps: int
    p: float | None
    init_kind: InitKind
    task: str
    outcome: ClassificationOutcome
    naive_label: int | None = None

    @property
    def naive_correct(self) -> bool | None:
        if self.naive_label is None or self.outcome.true_label is None:
            return None
        return self.naive_label == self.outcome.true_label
