"""Matrix-product representation of classical distributions and reverse evolution.

Every transfer matrix is symmetric and every projector diagonal, so
(1| O_n ... O_1 |Q) = (O_1 ... O_n |1))^T |Q): the record's operators are applied in
reverse order to the flat product state |1), whose entanglement stays low, and the
result is contracted with the exact MPS of the initial distribution.

Bond indices carry U(1) labels, the number of occupied sites to the left of the bond.
A tensor entry (a, s, b) is nonzero only when charge[b] == charge[a] + s; gates and
projectors conserve the labels, so every decomposition runs block by block and no
weight ever appears in a sector the state cannot reach.
"""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
import logging
import math

import numpy as np
import scipy.linalg

from .const import DEFAULT_THRESHOLD, INIT_DICKE, INIT_NEEL, INIT_NEEL_FLIP, INIT_PLUS
from .exceptions import InvalidArgument, NumericError
from .models import InitKind, MeasurementRecord
from .sepmodel import HopSchedule, record_operators, resolve_kind, transfer_matrix

_LOGGER = logging.getLogger(__name__)

_OCCUPATIONS = np.arange(2)


def truncation_rank(singular_values: np.ndarray, threshold: float) -> int:
    """Number of singular values kept.

    The smallest values are discarded while their summed squared weight, relative to the
    total squared weight, stays below `threshold`. At least one value is kept.
    """
    weights = singular_values**2
    total = float(weights.sum())
    if total <= 0.0:
        return 1
    tail = np.cumsum(weights[::-1])[::-1] / total
    return max(1, int(np.count_nonzero(tail >= threshold)))


def _svd(matrix: np.ndarray, where: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        _LOGGER.debug("gesdd failed at %s, retrying with gesvd", where)
    try:
        return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, ValueError) as ex:
        raise NumericError(
            "SVD did not converge",
            {**where, "shape": matrix.shape, "finite": bool(np.all(np.isfinite(matrix)))},
        ) from ex


def block_svd(
    matrix: np.ndarray, row_charges: np.ndarray, col_charges: np.ndarray, where: dict
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """SVD of a charge-conserving matrix, one block per charge.

    Returns (u, s, vh, charges) with the singular values of all blocks merged in
    descending order and `charges` labelling each of them. Zero singular values are
    dropped, so an all-zero matrix gives empty factors.
    """
    n_rows, n_cols = matrix.shape
    us, values, vhs, labels = [], [], [], []
    for charge in np.intersect1d(row_charges, col_charges):
        rows = np.flatnonzero(row_charges == charge)
        cols = np.flatnonzero(col_charges == charge)
        block = matrix[np.ix_(rows, cols)]
        if not np.any(block):
            continue
        u, s, vh = _svd(block, {**where, "charge": int(charge)})
        nonzero = s > 0.0
        full_u = np.zeros((n_rows, int(nonzero.sum())))
        full_u[rows] = u[:, nonzero]
        full_vh = np.zeros((int(nonzero.sum()), n_cols))
        full_vh[:, cols] = vh[nonzero]
        us.append(full_u)
        values.append(s[nonzero])
        vhs.append(full_vh)
        labels.append(np.full(int(nonzero.sum()), charge, dtype=np.int64))
    if not values:
        return np.zeros((n_rows, 0)), np.zeros(0), np.zeros((0, n_cols)), np.zeros(0, dtype=np.int64)
    s = np.concatenate(values)
    order = np.argsort(-s, kind="stable")
    return np.hstack(us)[:, order], s[order], np.vstack(vhs)[order], np.concatenate(labels)[order]


def _allowed(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """(left, 2, right) mask of the entries that conserve charge."""
    return left[:, None, None] + _OCCUPATIONS[None, :, None] == right[None, None, :]


def _counting_charges(n_sites: int, charge: int | None) -> list[np.ndarray]:
    """Bond labels of every configuration, or of those that can still reach `charge`."""
    if charge is None:
        return [np.arange(bond + 1) for bond in range(n_sites + 1)]
    return [np.arange(max(0, charge - (n_sites - bond)), min(bond, charge) + 1) for bond in range(n_sites + 1)]


def initial_bond_charges(n_sites: int, kind: InitKind) -> dict[int, int]:
    """Bond labels fixed by an initial kind: the total for dicke, every bond for Neel."""
    if kind.name == INIT_DICKE:
        return {n_sites: kind.charge}
    if kind.name in (INIT_NEEL, INIT_NEEL_FLIP):
        bits = [1 if site % 2 == 0 else 0 for site in range(n_sites)]
        if kind.name == INIT_NEEL_FLIP:
            bits[0] = 0
        return dict(enumerate(np.concatenate([[0], np.cumsum(bits)]).tolist()))
    return {}


@dataclass
class ProbabilityMPS:
    """Tensors of shape (left bond, 2, right bond); value = contraction * exp(log_scale).

    `charges[j]` labels the indices of bond j (left of site j); `sector` is the total
    charge when the state holds a single one. `center` is the orthogonality center in
    mixed-canonical form, or None.
    """

    tensors: list[np.ndarray]
    charges: list[np.ndarray]
    sector: int | None = None
    log_scale: float = 0.0
    threshold: float = DEFAULT_THRESHOLD
    max_bond: int | None = None
    center: int | None = None
    discarded_weight: float = 0.0
    is_zero: bool = False
    history: list[int] = field(default_factory=list)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dimensions(self) -> list[int]:
        return [tensor.shape[2] for tensor in self.tensors[:-1]]

    @classmethod
    def _counting(cls, n_sites: int, charge: int | None, value: float, **kwargs) -> ProbabilityMPS:
        charges = _counting_charges(n_sites, charge)
        tensors = [value * _allowed(charges[site], charges[site + 1]) for site in range(n_sites)]
        return cls(tensors, charges, sector=charge, **kwargs)

    @classmethod
    def flat(
        cls,
        n_sites: int,
        charge: int | None = None,
        threshold: float = DEFAULT_THRESHOLD,
        max_bond: int | None = None,
    ) -> ProbabilityMPS:
        """The all-ones vector |1), restricted to total `charge` when one is given."""
        if charge is not None and not 0 <= charge <= n_sites:
            raise InvalidArgument(f"Charge {charge} out of range for L={n_sites}")
        return cls._counting(n_sites, charge, 1.0, threshold=threshold, max_bond=max_bond)

    @classmethod
    def from_kind(cls, n_sites: int, kind: InitKind | int) -> ProbabilityMPS:
        """Exact MPS of an initial classical distribution.

        dicke(Q) is a counting automaton whose bond index is the number of particles to
        the left, restricted to counts that can still reach Q.
        """
        kind = resolve_kind(kind)
        kind.validate_for(n_sites)
        if kind.name == INIT_PLUS:
            return cls._counting(n_sites, None, 0.5)
        if kind.name in (INIT_NEEL, INIT_NEEL_FLIP):
            fixed = initial_bond_charges(n_sites, kind)
            charges = [np.array([fixed[bond]]) for bond in range(n_sites + 1)]
            tensors = [_allowed(charges[site], charges[site + 1]).astype(float) for site in range(n_sites)]
            return cls(tensors, charges, sector=fixed[n_sites])
        if kind.name != INIT_DICKE:
            raise InvalidArgument(f"No MPS for init kind {kind}")
        return cls._counting(n_sites, kind.charge, 1.0, log_scale=-math.log(math.comb(n_sites, kind.charge)))

    def to_dense(self) -> np.ndarray:
        """Full 2^L vector (site 0 most significant); for small L only."""
        if self.is_zero:
            return np.zeros(2**self.n_sites)
        vector = self.tensors[0]
        for tensor in self.tensors[1:]:
            vector = np.tensordot(vector, tensor, axes=(vector.ndim - 1, 0))
        return vector.reshape(2**self.n_sites, -1).sum(axis=1) * math.exp(self.log_scale)

    def log_overlap(self, other: ProbabilityMPS) -> float:
        """log of the full contraction <self|other> over all physical indices."""
        if other.n_sites != self.n_sites:
            raise InvalidArgument("MPS lengths differ")
        if self.is_zero or other.is_zero:
            return -math.inf
        environment = np.ones((1, 1))
        log_acc = self.log_scale + other.log_scale
        for bond, (mine, theirs) in enumerate(zip(self.tensors, other.tensors, strict=True), start=1):
            environment = np.einsum("ab,asc,bsd->cd", environment, mine, theirs)
            environment[self.charges[bond][:, None] != other.charges[bond][None, :]] = 0.0
            scale = float(np.max(np.abs(environment), initial=0.0))
            if scale == 0.0:
                return -math.inf
            environment /= scale
            log_acc += math.log(scale)
        value = float(environment.sum())
        if value <= 0.0:
            # truncation error dominates; treat as an excluded record
            _LOGGER.debug("Non-positive MPS overlap at log scale %.3f", log_acc)
            return -math.inf
        return log_acc + math.log(value)

    def log_total(self) -> float:
        """log of the 1-norm, i.e. the contraction with the flat covector."""
        return self.log_overlap(ProbabilityMPS.flat(self.n_sites))

    def _set_zero(self) -> None:
        self.is_zero = True
        self.log_scale = -math.inf

    def apply_projector(self, site: int, outcome: int) -> None:
        """Keep only configurations with `outcome` on `site`; breaks canonical form."""
        tensor = self.tensors[site].copy()
        tensor[:, 1 - outcome, :] = 0.0
        self.tensors[site] = tensor
        self.center = None

    def restrict_charges(self, windows: np.ndarray) -> None:
        """Drop bond indices whose label lies outside the (low, high) window of their bond."""
        if self.is_zero:
            return
        for bond in range(1, self.n_sites + 1):
            low, high = windows[bond]
            keep = (self.charges[bond] >= low) & (self.charges[bond] <= high)
            if keep.all():
                continue
            if not keep.any():
                self._set_zero()
                return
            self.charges[bond] = self.charges[bond][keep]
            self.tensors[bond - 1] = self.tensors[bond - 1][:, :, keep]
            if bond < self.n_sites:
                self.tensors[bond] = self.tensors[bond][keep]
            self.center = None

    def right_canonicalize(self) -> None:
        """Bring the chain to right-canonical form with the center (and the norm) at site 0."""
        if self.is_zero:
            return
        for site in range(self.n_sites - 1, 0, -1):
            tensor = self.tensors[site]
            left_dim, _, right_dim = tensor.shape
            columns = (self.charges[site + 1][None, :] - _OCCUPATIONS[:, None]).reshape(-1)
            u, s, vh, labels = block_svd(
                tensor.reshape(left_dim, 2 * right_dim), self.charges[site], columns, {"site": site}
            )
            if s.size == 0:
                self._set_zero()
                return
            self.tensors[site] = vh.reshape(-1, 2, right_dim)
            self.tensors[site - 1] = np.tensordot(self.tensors[site - 1], u * s, axes=(2, 0))
            self.charges[site] = labels
        norm = float(np.linalg.norm(self.tensors[0]))
        if norm == 0.0 or not math.isfinite(norm):
            if not math.isfinite(norm):
                raise NumericError("Non-finite MPS norm", {"log_scale": self.log_scale})
            self._set_zero()
            return
        self.tensors[0] = self.tensors[0] / norm
        self.log_scale += math.log(norm)
        self.center = 0

    def _move_center_right(self) -> None:
        site = self.center
        tensor = self.tensors[site]
        left_dim, _, right_dim = tensor.shape
        rows = (self.charges[site][:, None] + _OCCUPATIONS[None, :]).reshape(-1)
        u, s, vh, labels = block_svd(
            tensor.reshape(left_dim * 2, right_dim), rows, self.charges[site + 1], {"site": site}
        )
        if s.size == 0:
            self._set_zero()
            return
        self.tensors[site] = u.reshape(left_dim, 2, -1)
        self.tensors[site + 1] = np.tensordot(s[:, None] * vh, self.tensors[site + 1], axes=(1, 0))
        self.charges[site + 1] = labels
        self.center = site + 1

    def apply_two_site(self, left: int, matrix: np.ndarray) -> None:
        """Apply a 4x4 operator to (left, left + 1) at the orthogonality center and truncate."""
        if self.is_zero:
            return
        if self.center is None:
            self.right_canonicalize()
            if self.is_zero:
                return
        if self.center > left:
            raise InvalidArgument(f"Center {self.center} is right of bond {left}; sweep left to right")
        while self.center < left:
            self._move_center_right()
            if self.is_zero:
                return

        first, second = self.tensors[left], self.tensors[left + 1]
        left_dim, right_dim = first.shape[0], second.shape[2]
        theta = np.tensordot(first, second, axes=(2, 0))
        theta = np.einsum("stuv,auvb->astb", matrix.reshape(2, 2, 2, 2), theta)
        rows = (self.charges[left][:, None] + _OCCUPATIONS[None, :]).reshape(-1)
        columns = (self.charges[left + 2][None, :] - _OCCUPATIONS[:, None]).reshape(-1)
        u, s, vh, labels = block_svd(theta.reshape(left_dim * 2, 2 * right_dim), rows, columns, {"bond": left})
        if s.size == 0:
            self._set_zero()
            return

        keep = truncation_rank(s, self.threshold)
        if self.max_bond is not None:
            keep = min(keep, self.max_bond)
        total = float(np.sum(s**2))
        kept = float(np.sum(s[:keep] ** 2))
        self.discarded_weight += (total - kept) / total
        norm = math.sqrt(kept)
        self.log_scale += math.log(norm)
        self.tensors[left] = u[:, :keep].reshape(left_dim, 2, keep)
        self.tensors[left + 1] = ((s[:keep, None] / norm) * vh[:keep]).reshape(keep, 2, right_dim)
        self.charges[left + 1] = labels[:keep]
        self.center = left + 1


def bond_charge_windows(
    record: MeasurementRecord,
    kind: InitKind | int | None = None,
    hops: HopSchedule | None = None,
) -> np.ndarray | None:
    """Feasible bond labels per half-layer, or None when the record has zero probability.

    Entry [tau, j] is the (low, high) range of the number of particles left of bond j
    before half-layer tau; the last row is the final state. The labels obey difference
    constraints: they step by 0 or 1 along the chain, a measurement fixes one step, and
    a gate on (j - 1, j) with nonzero hop frees bond j while every other bond keeps its
    label. Bounds propagation decides such systems exactly, except that a gate swapping
    with certainty is relaxed to a free bond.
    """
    kind = None if kind is None else resolve_kind(kind)
    L = record.n_sites
    rounds = record_operators(record, hops)
    width = L + 1
    n_vars = (len(rounds) + 1) * width

    # arc (tail, head, cost): label[head] <= label[tail] + cost
    outgoing: dict[int, list[tuple[int, int]]] = defaultdict(list)
    incoming: dict[int, list[tuple[int, int]]] = defaultdict(list)

    def bound(tail: int, head: int, cost: int) -> None:
        outgoing[tail].append((head, cost))
        incoming[head].append((tail, cost))

    def step(tail: int, head: int, low: int, high: int) -> None:
        bound(tail, head, high)
        bound(head, tail, -low)

    for row in range(len(rounds) + 1):
        for bond in range(L):
            step(row * width + bond, row * width + bond + 1, 0, 1)
    for tau, round_ops in enumerate(rounds):
        free = {gate.left + 1 for gate in round_ops.gates if gate.hop > 0.0}
        for bond in range(width):
            if bond not in free:
                step(tau * width + bond, (tau + 1) * width + bond, 0, 0)
        row = (tau + 1) * width
        for projector in round_ops.projectors:
            step(row + projector.site, row + projector.site + 1, projector.outcome, projector.outcome)

    low = np.zeros(n_vars, dtype=np.int64)
    high = np.full(n_vars, L, dtype=np.int64)
    high[::width] = 0
    if kind is not None:
        kind.validate_for(L)
        for bond, charge in initial_bond_charges(L, kind).items():
            low[bond] = high[bond] = charge

    queue = deque(range(n_vars))
    queued = set(queue)
    while queue:
        var = queue.popleft()
        queued.discard(var)
        changed = []
        for head, cost in outgoing[var]:
            if high[var] + cost < high[head]:
                high[head] = high[var] + cost
                changed.append(head)
        for tail, cost in incoming[var]:
            if low[var] - cost > low[tail]:
                low[tail] = low[var] - cost
                changed.append(tail)
        for other in changed:
            if low[other] > high[other]:
                _LOGGER.debug("Record %d is impossible under %s", record.record_seed, kind)
                return None
            if other not in queued:
                queue.append(other)
                queued.add(other)
    return np.stack([low, high], axis=-1).reshape(len(rounds) + 1, width, 2)


def reverse_evolve(
    record: MeasurementRecord,
    hops: HopSchedule | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    max_bond: int | None = None,
    charge: int | None = None,
) -> ProbabilityMPS:
    """(1| O_n ... O_1 as an MPS, built by applying the record's operators last-first.

    With `charge` the flat covector is restricted to that sector. Within a half-layer the
    measurements follow the gates, so in reverse each round applies its projectors
    first and then its (mutually commuting) gates in one left-to-right sweep. Bond
    labels the record rules out are pruned after every round.
    """
    mps = ProbabilityMPS.flat(record.n_sites, charge, threshold=threshold, max_bond=max_bond)
    windows = bond_charge_windows(record, None if charge is None else InitKind.dicke(charge), hops)
    if windows is None:
        mps._set_zero()
        return mps
    rounds = record_operators(record, hops)
    mps.restrict_charges(windows[len(rounds)])
    for tau in range(len(rounds) - 1, -1, -1):
        round_ops = rounds[tau]
        for projector in round_ops.projectors:
            mps.apply_projector(projector.site, projector.outcome)
        if round_ops.gates:
            mps.right_canonicalize()
            for gate in round_ops.gates:
                mps.apply_two_site(gate.left, transfer_matrix(gate.hop))
        mps.restrict_charges(windows[tau])
        if mps.is_zero:
            break
        if round_ops.gates:
            mps.history.append(max(mps.bond_dimensions, default=1))
    _LOGGER.debug(
        "Reverse evolution of record %d in sector %s: max bond %d, discarded weight %.3g",
        record.record_seed,
        charge,
        max(mps.history, default=1),
        mps.discarded_weight,
    )
    return mps


def evolve_mps_likelihood(
    record: MeasurementRecord,
    kind: InitKind | int,
    hops: HopSchedule | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    reversed_state: ProbabilityMPS | None = None,
) -> float:
    """log P(record | kind) via the reverse-evolved MPS; exactly -inf when impossible.

    Pass `reversed_state` to reuse one reverse evolution across labels of its sector.
    """
    kind = resolve_kind(kind)
    charge = kind.charge_for(record.n_sites)
    if reversed_state is not None and reversed_state.sector not in (None, charge):
        raise InvalidArgument(f"Reverse evolution of sector {reversed_state.sector} cannot score charge {charge}")
    if bond_charge_windows(record, kind, hops) is None:
        return -math.inf
    if reversed_state is None:
        reversed_state = reverse_evolve(record, hops, threshold, charge=charge)
    return reversed_state.log_overlap(ProbabilityMPS.from_kind(record.n_sites, kind))
