"""Uniform Clifford sampling and flatness statistics of Clifford orbits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qsim
from .qsim import GateOp, PureState


@dataclass(frozen=True, eq=False)
class CliffordElement:
    num_qubits: int
    gates: tuple[GateOp, ...]
    seed: int

    def apply(self, state: PureState) -> PureState:
        return qsim.run_circuit(state, self.gates)

    def inverse_gates(self) -> list[GateOp]:
        return inverse_hsc(self.gates)

    def apply_inverse(self, state: PureState) -> PureState:
        return qsim.run_circuit(state, self.inverse_gates())

    def signature(self) -> tuple:
        return tuple((g.name, g.targets) for g in self.gates)


def inverse_hsc(gates: Sequence[GateOp]) -> list[GateOp]:
    """Inverse of an {H, S, CNOT} sequence, staying inside the gate set (S^-1 = S^3)."""
    out: list[GateOp] = []
    for g in reversed(gates):
        if g.name == "S":
            out.extend([g, g, g])
        elif g.name in ("H", "CNOT"):
            out.append(g)
        else:
            out.append(g.inverse())
    return out


class _PauliTracker:
    """Symplectic (x, z) vectors of Paulis under conjugation, signs ignored."""

    def __init__(self, paulis: list[np.ndarray]):
        self.paulis = paulis  # each row: [x_0..x_{n-1}, z_0..z_{n-1}]
        self.gates: list[tuple[str, tuple[int, ...]]] = []

    def h(self, j: int, n: int) -> None:
        for p in self.paulis:
            p[j], p[n + j] = p[n + j], p[j]
        self.gates.append(("H", (j,)))

    def s(self, j: int, n: int) -> None:
        for p in self.paulis:
            p[n + j] ^= p[j]
        self.gates.append(("S", (j,)))

    def cnot(self, c: int, t: int, n: int) -> None:
        for p in self.paulis:
            p[t] ^= p[c]
            p[n + c] ^= p[n + t]
        self.gates.append(("CNOT", (c, t)))


def _symplectic_product(a: np.ndarray, b: np.ndarray, n: int) -> int:
    return int((a[:n] @ b[n:] + a[n:] @ b[:n]) % 2)


def _random_pauli(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    p = np.zeros(2 * n, dtype=np.int64)
    while True:
        bits = rng.integers(0, 2, size=2 * (n - k))
        if bits.any():
            p[k:n] = bits[: n - k]
            p[n + k:] = bits[n - k:]
            return p


def _sweep(tr: _PauliTracker, k: int, n: int) -> None:
    """Append gates on qubits k..n-1 sending pair (P, Q) to (X_k, Z_k)."""
    P, Q = tr.paulis

    def clear_z(p):
        for j in range(k, n):
            if p[n + j]:
                if p[j]:
                    tr.s(j, n)
                else:
                    tr.h(j, n)

    clear_z(P)
    support = [j for j in range(k, n) if P[j]]
    while len(support) > 1:
        keep = []
        for a, b in zip(support[::2], support[1::2]):
            tr.cnot(a, b, n)
            keep.append(a)
        if len(support) % 2:
            keep.append(support[-1])
        support = keep
    j = support[0]
    if j != k:
        tr.cnot(j, k, n)
        tr.cnot(k, j, n)
        tr.cnot(j, k, n)
    # P = X_k now; Q anticommutes with it, so Q has a Z on qubit k
    is_zk = Q[n + k] == 1 and not Q[:n].any() and Q[n:].sum() == 1
    if is_zk:
        return
    tr.h(k, n)
    clear_z(Q)
    for t in range(k + 1, n):
        if Q[t]:
            tr.cnot(k, t, n)
    tr.h(k, n)


_GATE_BUILDERS = {"H": qsim.h, "S": qsim.s, "CNOT": qsim.cnot}


def clifford_from_seed(n: int, seed: int) -> CliffordElement:
    """Uniformly random n-qubit Clifford (up to global phase), fixed by ``seed``."""
    if n < 1 or n > qsim.MAX_QUBITS:
        raise qsim.QubitCapExceeded(f"cannot build a {n}-qubit Clifford")
    rng = np.random.default_rng(seed)
    sweep: list[tuple[str, tuple[int, ...]]] = []
    for k in range(n):
        P = _random_pauli(k, n, rng)
        while True:
            Q = _random_pauli(k, n, rng)
            if _symplectic_product(P, Q, n):
                break
        tr = _PauliTracker([P, Q])
        _sweep(tr, k, n)
        sweep.extend(tr.gates)
    # uniform Pauli layer fixes the signs; X = H S S H and Z = S S
    layer: list[tuple[str, tuple[int, ...]]] = []
    for q in range(n):
        a, b = rng.integers(0, 2, size=2)
        if b:
            layer += [("S", (q,)), ("S", (q,))]
        if a:
            layer += [("H", (q,)), ("S", (q,)), ("S", (q,)), ("H", (q,))]
    forward = [_GATE_BUILDERS[name](*t) for name, t in sweep]
    gates = [_GATE_BUILDERS[name](*t) for name, t in layer] + inverse_hsc(forward)
    return CliffordElement(n, tuple(gates), seed)


def sample_clifford(n: int, rng: np.random.Generator) -> CliffordElement:
    return clifford_from_seed(n, int(rng.integers(2**63)))


def identity_clifford(n: int) -> CliffordElement:
    return CliffordElement(n, (), -1)


# ---------------------------------------------------------------------------
# Flatness
# ---------------------------------------------------------------------------


def haar_second_moment(n: int) -> float:
    d = 1 << n
    return 2.0 / (d * (d + 1))


def heavy_mass(probs: np.ndarray, threshold: float) -> float:
    return float(probs[probs >= threshold].sum())


@dataclass
class FlatnessReport:
    threshold: float
    heavy_mass: list[float]
    fraction_flat: float
    empirical_second_moment: float
    heavy_cut: float = 0.05
    second_moments: list[float] = field(default_factory=list)

    def csv_rows(self) -> list[str]:
        rows = ["clifford,heavy_mass,second_moment"]
        for i, (hm, sm) in enumerate(zip(self.heavy_mass, self.second_moments)):
            rows.append(f"{i},{hm!r},{sm!r}")
        return rows

    def summary(self) -> dict:
        return {
            "threshold": self.threshold,
            "heavy_cut": self.heavy_cut,
            "num_cliffords": len(self.heavy_mass),
            "fraction_flat": self.fraction_flat,
            "empirical_second_moment": self.empirical_second_moment,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def flatness_stats(
    psi: PureState,
    num_cliffords: int,
    threshold: float,
    rng: np.random.Generator,
    heavy_cut: float = 0.05,
    cliffords: Sequence[CliffordElement] | None = None,
) -> FlatnessReport:
    """Heavy-output mass and collision statistics of C|psi> over sampled Cliffords.

    ``fraction_flat`` is the fraction of Cliffords whose heavy mass is at most
    ``heavy_cut``. Passing ``cliffords`` replaces sampling.
    """
    n = psi.num_qubits
    if cliffords is None:
        cliffords = [sample_clifford(n, rng) for _ in range(num_cliffords)]
    masses, moments = [], []
    for c in cliffords:
        p = np.abs(c.apply(psi).amplitudes) ** 2
        masses.append(heavy_mass(p, threshold))
        moments.append(float(np.mean(p * p)))
    flat = sum(1 for m in masses if m <= heavy_cut) / len(masses)
    return FlatnessReport(threshold, masses, flat, float(np.mean(moments)), heavy_cut, moments)
