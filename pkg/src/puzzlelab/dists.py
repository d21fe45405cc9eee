"""Circuit families and exact output distributions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qsim
from .errors import DimensionMismatch
from .qsim import Distribution, GateOp, PureState

FAMILY_KINDS = ("random-universal", "ghz-fixture", "product-fixture", "explicit")


@dataclass(frozen=True)
class CircuitFamily:
    family_kind: str
    num_qubits: int
    depth: int = 0
    seed: int = 0
    gates: tuple[GateOp, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.family_kind not in FAMILY_KINDS:
            raise ValueError(f"unsupported family_kind {self.family_kind!r}")
        if self.num_qubits < 1 or self.depth < 0:
            raise ValueError("num_qubits must be positive and depth non-negative")


@dataclass(frozen=True)
class PrefixQuery:
    prefix: str
    p0: float
    p1: float
    defined: bool = True


def haar_2x2(rng: np.random.Generator) -> np.ndarray:
    """Haar-random single-qubit unitary via QR of a complex Gaussian matrix."""
    g = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def brickwork_pairs(n: int, layer: int) -> list[tuple[int, int]]:
    start = layer % 2
    return [(q, q + 1) for q in range(start, n - 1, 2)]


def sample_circuit(family: CircuitFamily, rng: np.random.Generator | None = None) -> list[GateOp]:
    """Draw a circuit from ``family``; with no ``rng`` the family seed fixes it."""
    if rng is None:
        rng = np.random.default_rng(family.seed)
    n = family.num_qubits
    kind = family.family_kind
    if kind == "ghz-fixture":
        return [qsim.h(0)] + [qsim.cnot(q, q + 1) for q in range(n - 1)]
    if kind == "product-fixture":
        angles = rng.uniform(0, np.pi, size=n)
        return [qsim.ry(q, float(a)) for q, a in enumerate(angles)]
    if kind == "explicit":
        return list(family.gates)
    gates: list[GateOp] = []
    for layer in range(family.depth):
        for q in range(n):
            gates.append(qsim.unitary(q, haar_2x2(rng), "U"))
        for a, b in brickwork_pairs(n, layer):
            gates.append(qsim.cnot(a, b))
    return gates


def circuit_width(circuit: Sequence[GateOp]) -> int:
    return max((max(g.targets) + 1 for g in circuit), default=0)


def output_state(circuit: Sequence[GateOp], num_qubits: int) -> PureState:
    return qsim.run_circuit(PureState.zeros(num_qubits), circuit)


def exact_output_distribution(circuit: Sequence[GateOp], n_out: int, num_qubits: int | None = None) -> Distribution:
    """Probabilities of the first ``n_out`` qubits after running ``circuit`` on |0...0>."""
    width = max(n_out, circuit_width(circuit), num_qubits or 0)
    state = output_state(circuit, width)
    return qsim.born_distribution(state, range(n_out))


def family_distribution(family: CircuitFamily, rng: np.random.Generator | None = None) -> Distribution:
    circuit = sample_circuit(family, rng)
    return exact_output_distribution(circuit, family.num_qubits, family.num_qubits)


def conditional_next_bit(d: Distribution, prefix: str) -> PrefixQuery:
    if len(prefix) >= d.num_bits:
        raise DimensionMismatch("prefix must be shorter than the strings")
    m0 = d.prefix_mass(prefix + "0")
    m1 = d.prefix_mass(prefix + "1")
    total = m0 + m1
    if total <= 0:
        return PrefixQuery(prefix, float("nan"), float("nan"), defined=False)
    return PrefixQuery(prefix, m0 / total, m1 / total)


def conditional_table(d: Distribution, length: int) -> np.ndarray:
    """Pr[next bit = 1 | prefix] for every prefix of ``length`` bits (nan when massless)."""
    pairs = d.marginal(length + 1).reshape(-1, 2)
    total = pairs.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, pairs[:, 1] / np.where(total > 0, total, 1.0), np.nan)
