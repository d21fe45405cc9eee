"""Dense statevector simulation.

Qubits are addressed by 0-based position; position 0 is the leftmost
character of outcome strings and the most significant bit of basis indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, NonUnitaryGate, QubitCapExceeded

MAX_QUBITS = 24
NORM_TOL = 1e-9

_SQ2 = 1.0 / np.sqrt(2.0)


def bits_to_int(bits: str) -> int:
    return int(bits, 2) if bits else 0


def int_to_bits(value: int, width: int) -> str:
    return format(value, f"0{width}b") if width else ""


def _check_cap(n: int) -> None:
    if n > MAX_QUBITS:
        raise QubitCapExceeded(f"{n} qubits exceeds the cap of {MAX_QUBITS}")
    if n < 0:
        raise DimensionMismatch("negative qubit count")


# ---------------------------------------------------------------------------
# States and distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PureState:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        _check_cap(self.num_qubits)
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 1 << self.num_qubits:
            raise DimensionMismatch(
                f"expected {1 << self.num_qubits} amplitudes, got {amps.shape[0]}"
            )
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zeros(cls, n: int) -> "PureState":
        _check_cap(n)
        amps = np.zeros(1 << n, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n, amps)

    @classmethod
    def basis(cls, bits: str) -> "PureState":
        n = len(bits)
        _check_cap(n)
        amps = np.zeros(1 << n, dtype=np.complex128)
        amps[bits_to_int(bits)] = 1.0
        return cls(n, amps)

    @classmethod
    def from_vector(cls, vec, normalize: bool = False) -> "PureState":
        vec = np.asarray(vec, dtype=np.complex128).reshape(-1)
        n = int(vec.shape[0]).bit_length() - 1
        if 1 << n != vec.shape[0]:
            raise DimensionMismatch("vector length is not a power of two")
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(n, vec)

    def amplitude(self, bits: str) -> complex:
        return complex(self.amplitudes[bits_to_int(bits)])

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(self.num_qubits + other.num_qubits, np.kron(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability table over fixed-width bitstrings, stored densely."""

    num_bits: int
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64).reshape(-1)
        if p.shape[0] != 1 << self.num_bits:
            raise DimensionMismatch(f"expected {1 << self.num_bits} entries, got {p.shape[0]}")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_dict(cls, table: Mapping[str, float], num_bits: int | None = None) -> "Distribution":
        if num_bits is None:
            lengths = {len(k) for k in table}
            if len(lengths) != 1:
                raise DimensionMismatch("keys must share one length")
            num_bits = lengths.pop()
        p = np.zeros(1 << num_bits)
        for key, value in table.items():
            if len(key) != num_bits:
                raise DimensionMismatch(f"key {key!r} has wrong length")
            p[bits_to_int(key)] += value
        return cls(num_bits, p)

    @classmethod
    def point(cls, bits: str) -> "Distribution":
        return cls.from_dict({bits: 1.0})

    @classmethod
    def uniform(cls, n: int) -> "Distribution":
        return cls(n, np.full(1 << n, 1.0 / (1 << n)))

    def prob(self, bits: str) -> float:
        if len(bits) != self.num_bits:
            raise DimensionMismatch(f"{bits!r} is not a {self.num_bits}-bit string")
        return float(self.probs[bits_to_int(bits)])

    def prefix_mass(self, prefix: str) -> float:
        if len(prefix) > self.num_bits:
            raise DimensionMismatch("prefix longer than the strings")
        width = 1 << (self.num_bits - len(prefix))
        start = bits_to_int(prefix) * width
        return float(self.probs[start:start + width].sum())

    def marginal(self, length: int) -> np.ndarray:
        """Masses of all prefixes of the given length, indexed by prefix value."""
        return self.probs.reshape(1 << length, -1).sum(axis=1)

    def support(self) -> list[str]:
        return [int_to_bits(int(i), self.num_bits) for i in np.flatnonzero(self.probs)]

    def as_dict(self) -> dict[str, float]:
        return {int_to_bits(int(i), self.num_bits): float(self.probs[i]) for i in np.flatnonzero(self.probs)}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        idx = rng.choice(self.probs.shape[0], size=size, p=self.probs)
        if size is None:
            return int_to_bits(int(idx), self.num_bits)
        return [int_to_bits(int(i), self.num_bits) for i in idx]


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GateOp:
    """A gate on ``targets``.

    ``kind`` is ``"unitary"`` (dense 2^k x 2^k matrix) or ``"permutation"``
    (``table[i]`` is the local basis index that ``i`` is sent to).
    """

    kind: str
    targets: tuple[int, ...]
    matrix: np.ndarray | None = None
    table: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        targets = tuple(int(t) for t in self.targets)
        object.__setattr__(self, "targets", targets)
        if len(set(targets)) != len(targets) or not targets:
            raise ValueError("targets must be distinct and non-empty")
        dim = 1 << len(targets)
        if self.kind == "unitary":
            m = np.array(self.matrix, dtype=np.complex128)
            if m.shape != (dim, dim):
                raise DimensionMismatch(f"matrix shape {m.shape} does not fit {len(targets)} targets")
            if not np.allclose(m.conj().T @ m, np.eye(dim), atol=NORM_TOL, rtol=0):
                raise NonUnitaryGate(f"gate {self.name or '?'} is not unitary")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
        elif self.kind == "permutation":
            t = np.array(self.table, dtype=np.int64).reshape(-1)
            if t.shape[0] != dim or not np.array_equal(np.sort(t), np.arange(dim)):
                raise NonUnitaryGate("table is not a permutation")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)
        else:
            raise ValueError(f"unknown gate kind {self.kind!r}")

    def inverse(self) -> "GateOp":
        if self.kind == "unitary":
            return GateOp("unitary", self.targets, matrix=self.matrix.conj().T, name=self.name + "^-1")
        inv = np.empty_like(self.table)
        inv[self.table] = np.arange(self.table.shape[0])
        return GateOp("permutation", self.targets, table=inv, name=self.name + "^-1")

    def full_matrix(self, num_qubits: int) -> np.ndarray:
        """Dense operator on the whole register (small registers only)."""
        dim = 1 << num_qubits
        cols = [apply_gate(PureState.basis(int_to_bits(i, num_qubits)), self).amplitudes for i in range(dim)]
        return np.stack(cols, axis=1)


H_MATRIX = np.array([[1, 1], [1, -1]], dtype=np.complex128) * _SQ2
X_MATRIX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y_MATRIX = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z_MATRIX = np.diag([1, -1]).astype(np.complex128)
S_MATRIX = np.diag([1, 1j]).astype(np.complex128)
CNOT_MATRIX = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=np.complex128
)


def unitary(targets: Sequence[int] | int, matrix, name: str = "") -> GateOp:
    if isinstance(targets, (int, np.integer)):
        targets = (int(targets),)
    return GateOp("unitary", tuple(targets), matrix=matrix, name=name)


@lru_cache(maxsize=None)
def h(q: int) -> GateOp:
    return unitary(q, H_MATRIX, "H")


@lru_cache(maxsize=None)
def x(q: int) -> GateOp:
    return unitary(q, X_MATRIX, "X")


@lru_cache(maxsize=None)
def z(q: int) -> GateOp:
    return unitary(q, Z_MATRIX, "Z")


@lru_cache(maxsize=None)
def s(q: int) -> GateOp:
    return unitary(q, S_MATRIX, "S")


@lru_cache(maxsize=None)
def identity(q: int) -> GateOp:
    return unitary(q, np.eye(2), "I")


@lru_cache(maxsize=None)
def cnot(control: int, target: int) -> GateOp:
    return unitary((control, target), CNOT_MATRIX, "CNOT")


def ry(q: int, angle: float) -> GateOp:
    c, sn = np.cos(angle / 2), np.sin(angle / 2)
    return unitary(q, np.array([[c, -sn], [sn, c]]), "RY")


def permutation(targets: Sequence[int], table, name: str = "") -> GateOp:
    return GateOp("permutation", tuple(targets), table=table, name=name)


def function_oracle(inputs: Sequence[int], outputs: Sequence[int], fn: Callable[[int], int], name: str = "") -> GateOp:
    """|a>|b> -> |a>|b xor fn(a)> with ``a`` read from ``inputs`` and ``b`` from ``outputs``."""
    k_in, k_out = len(inputs), len(outputs)
    mask = (1 << k_out) - 1
    table = np.empty(1 << (k_in + k_out), dtype=np.int64)
    for a in range(1 << k_in):
        fa = fn(a) & mask
        base = a << k_out
        for b in range(1 << k_out):
            table[base | b] = base | (b ^ fa)
    return permutation(tuple(inputs) + tuple(outputs), table, name or "oracle")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _check_targets(n: int, qubits: Iterable[int]) -> tuple[int, ...]:
    qs = tuple(int(q) for q in qubits)
    if len(set(qs)) != len(qs):
        raise ValueError("qubit indices must be distinct")
    for q in qs:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")
    return qs


def _apply_raw(amps: np.ndarray, n: int, gate: GateOp) -> np.ndarray:
    targets = _check_targets(n, gate.targets)
    k = len(targets)
    psi = amps.reshape((2,) * n) if n else amps
    front = np.moveaxis(psi, targets, range(k)).reshape(1 << k, -1)
    if gate.kind == "unitary":
        out = gate.matrix @ front
    else:
        out = np.empty_like(front)
        out[gate.table] = front
    out = out.reshape((2,) * n)
    return np.moveaxis(out, range(k), targets).reshape(-1)


def apply_gate(state: PureState, gate: GateOp) -> PureState:
    """Return ``gate`` applied to ``state``; the input is left untouched."""
    return PureState(state.num_qubits, _apply_raw(state.amplitudes, state.num_qubits, gate))


def run_circuit(state: PureState, gates: Iterable[GateOp]) -> PureState:
    amps = state.amplitudes
    n = state.num_qubits
    for g in gates:
        amps = _apply_raw(amps, n, g)
    return PureState(n, amps)


def invert_circuit(gates: Sequence[GateOp]) -> list[GateOp]:
    return [g.inverse() for g in reversed(gates)]


def _marginal_probs(state: PureState, qubits: tuple[int, ...]) -> np.ndarray:
    n = state.num_qubits
    p = np.abs(state.amplitudes) ** 2
    if qubits == tuple(range(n)):
        return p
    p = p.reshape((2,) * n)
    rest = tuple(q for q in range(n) if q not in qubits)
    p = p.sum(axis=rest) if rest else p
    # remaining axes are in ascending order; reorder to the requested order
    order = np.argsort(np.argsort(qubits))
    return np.transpose(p, order).reshape(-1) if qubits else p.reshape(-1)


def born_distribution(state: PureState, qubits: Sequence[int] | None = None) -> Distribution:
    qs = tuple(range(state.num_qubits)) if qubits is None else _check_targets(state.num_qubits, qubits)
    p = _marginal_probs(state, qs)
    return Distribution(len(qs), p / p.sum())


def measure_subset(state: PureState, qubits: Sequence[int], rng: np.random.Generator) -> tuple[str, PureState]:
    """Projectively measure ``qubits``; return the outcome and the collapsed state."""
    qs = _check_targets(state.num_qubits, qubits)
    if not qs:
        raise ValueError("no qubits to measure")
    dist = born_distribution(state, qs)
    outcome = dist.sample(rng)
    return outcome, project(state, qs, outcome)


def project(state: PureState, qubits: Sequence[int], outcome: str) -> PureState:
    """Renormalized projection of ``state`` onto ``outcome`` on ``qubits``."""
    n = state.num_qubits
    qs = _check_targets(n, qubits)
    psi = state.amplitudes.reshape((2,) * n).copy()
    mask = np.zeros((2,) * n, dtype=bool)
    index = [slice(None)] * n
    for q, b in zip(qs, outcome):
        index[q] = int(b)
    mask[tuple(index)] = True
    psi[~mask] = 0
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ValueError(f"outcome {outcome!r} has zero probability")
    return PureState(n, psi.reshape(-1) / norm)


def residual_state(state: PureState, qubits: Sequence[int], outcome: str) -> PureState:
    """State of the unmeasured qubits after observing ``outcome`` on ``qubits``."""
    n = state.num_qubits
    qs = _check_targets(n, qubits)
    psi = state.amplitudes.reshape((2,) * n)
    index = [slice(None)] * n
    for q, b in zip(qs, outcome):
        index[q] = int(b)
    rest = psi[tuple(index)].reshape(-1)
    norm = np.linalg.norm(rest)
    if norm == 0:
        raise ValueError(f"outcome {outcome!r} has zero probability")
    return PureState(n - len(qs), rest / norm)


def measure_shots(state: PureState, qubits: Sequence[int], shots: int, rng: np.random.Generator) -> dict[str, int]:
    """Outcome counts of ``shots`` independent measurements of fresh copies."""
    dist = born_distribution(state, qubits)
    counts = rng.multinomial(shots, dist.probs)
    return {int_to_bits(int(i), dist.num_bits): int(counts[i]) for i in np.flatnonzero(counts)}


def statistical_distance(a: Distribution, b: Distribution) -> float:
    if a.num_bits != b.num_bits:
        raise DimensionMismatch("distributions have different bit lengths")
    return float(0.5 * np.abs(a.probs - b.probs).sum())


def statistical_distance_maps(a: Mapping, b: Mapping) -> float:
    """Statistical distance between sparse tables with arbitrary hashable keys."""
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def inner(a: PureState, b: PureState) -> complex:
    if a.num_qubits != b.num_qubits:
        raise DimensionMismatch("states have different dimensions")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def trace_distance_pure(a: PureState, b: PureState) -> float:
    ov = abs(inner(a, b)) ** 2
    return float(np.sqrt(max(0.0, 1.0 - ov)))


def overlap_with_pure(joint: PureState, target: PureState, subsystem: Sequence[int]) -> float:
    """Fidelity of the reduced state of ``joint`` on ``subsystem`` with ``target``."""
    n = joint.num_qubits
    qs = _check_targets(n, subsystem)
    if target.num_qubits != len(qs):
        raise DimensionMismatch("target dimension does not match the subsystem")
    psi = np.moveaxis(joint.amplitudes.reshape((2,) * n), qs, range(len(qs)))
    psi = psi.reshape(1 << len(qs), -1)
    # project the subsystem onto the target; what remains is the overlap vector
    proj = target.amplitudes.conj() @ psi
    return float(min(1.0, np.vdot(proj, proj).real))
