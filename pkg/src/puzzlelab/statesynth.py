"""State-puzzle samplers, amplitude and phase synthesis, and the arctan2
stability bound."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import designs, dists, qsim
from .designs import CliffordElement
from .dists import CircuitFamily
from .errors import UndefinedSupport
from .oracles import NoiseSpec, SamplerOracle, noisy_sampler
from .qsim import GateOp, PureState, bits_to_int, int_to_bits

AMPLITUDE_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# State puzzles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StatePuzzleInstance:
    s: str
    psi: PureState
    generator_id: str


@dataclass(frozen=True)
class PurifiedGenerator:
    """Circuit on |0...0> whose first ``s_bits`` qubits form the S register.

    Remaining qubits hold the state (key register first, junk appended last).
    """

    circuit: tuple[GateOp, ...]
    s_bits: int
    num_qubits: int
    generator_id: str = "explicit"

    @cached_property
    def prepared(self) -> PureState:
        return qsim.run_circuit(PureState.zeros(self.num_qubits), self.circuit)

    def prepare(self) -> PureState:
        return self.prepared

    @property
    def state_bits(self) -> int:
        return self.num_qubits - self.s_bits

    def s_distribution(self) -> qsim.Distribution:
        return qsim.born_distribution(self.prepare(), range(self.s_bits))

    def state_for(self, s: str) -> PureState:
        return qsim.residual_state(self.prepare(), range(self.s_bits), s)


def random_generator(n: int, s_bits: int, depth: int, seed: int) -> PurifiedGenerator:
    fam = CircuitFamily("random-universal", n + s_bits, depth, seed)
    return PurifiedGenerator(tuple(dists.sample_circuit(fam)), s_bits, n + s_bits, f"random-universal:{seed}")


def state_puzzle_from_sampler(gen: PurifiedGenerator, rng: np.random.Generator) -> StatePuzzleInstance:
    """Measure the S register of the prepared state; keep the residual on the rest."""
    state = gen.prepare()
    s_qubits = list(range(gen.s_bits))
    s, _ = qsim.measure_subset(state, s_qubits, rng)
    return StatePuzzleInstance(s, qsim.residual_state(state, s_qubits, s), gen.generator_id)


# ---------------------------------------------------------------------------
# Two-level machinery for mode-1 puzzles
# ---------------------------------------------------------------------------


def shift_min(z: int, r: int) -> int:
    """min(z, z xor r) under big-endian integer order."""
    return min(z, z ^ r)


def f_r_oracle(n: int, r: int) -> GateOp:
    """|z>|w> -> |z>|w xor f_r(z)> with Z on qubits 0..n-1 and W on n..2n-1."""
    if not 0 < r < 1 << n:
        raise ValueError("r must be a nonzero n-bit shift")
    return qsim.function_oracle(range(n), range(n, 2 * n), lambda z: shift_min(z, r), f"f_r[{r}]")


def make_V(y0: str, y1: str, b: int) -> GateOp:
    """V|y0> = (|y0> + i^b |y1>)/sqrt2, V|y1> = (|y0> - i^b |y1>)/sqrt2, identity elsewhere."""
    if y0 == y1:
        raise ValueError("y0 and y1 must differ")
    if len(y0) != len(y1):
        raise ValueError("y0 and y1 must have equal length")
    n = len(y0)
    i0, i1 = bits_to_int(y0), bits_to_int(y1)
    phase = 1j ** int(b)
    m = np.eye(1 << n, dtype=np.complex128)
    m[i0, i0] = m[i0, i1] = 1 / np.sqrt(2)
    m[i1, i0] = phase / np.sqrt(2)
    m[i1, i1] = -phase / np.sqrt(2)
    return qsim.unitary(range(n), m, f"V[{y0},{y1},{b}]")


def rotation_gate(y0: str, y1: str, b: int) -> GateOp:
    """Basis change applied before the computational measurement of a mode-1 key.

    It is the transpose of :func:`make_V`; with it the outcome y0 has
    probability (1 + sin(theta) cos(phi))/2 for b = 0 and
    (1 + sin(theta) sin(phi))/2 for b = 1.
    """
    v = make_V(y0, y1, b)
    return qsim.unitary(v.targets, v.matrix.T, f"VT[{y0},{y1},{b}]")


def pair_state(y0: str, y1: str, theta: float, phi: float) -> PureState:
    """cos(theta/2)|y0> + e^{-i phi} sin(theta/2)|y1>."""
    n = len(y0)
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[bits_to_int(y0)] = np.cos(theta / 2)
    amps[bits_to_int(y1)] += np.exp(-1j * phi) * np.sin(theta / 2)
    return PureState(n, amps)


def pair_restriction(state: PureState, y0: str, y1: str) -> PureState | None:
    """Normalized projection onto span{|y0>, |y1>}; None when it vanishes."""
    amps = np.zeros_like(state.amplitudes)
    for y in (y0, y1):
        i = bits_to_int(y)
        amps[i] = state.amplitudes[i]
    norm = np.linalg.norm(amps)
    if norm == 0:
        return None
    return PureState(state.num_qubits, amps / norm)


def shift_measurement(state: PureState, r: int, rng: np.random.Generator) -> tuple[str, PureState]:
    """Apply f_r onto a fresh register, measure it, and return (image, residual on Z)."""
    n = state.num_qubits
    joint = state.tensor(PureState.zeros(n))
    joint = qsim.apply_gate(joint, f_r_oracle(n, r))
    w_qubits = list(range(n, 2 * n))
    w, _ = qsim.measure_subset(joint, w_qubits, rng)
    return w, qsim.residual_state(joint, w_qubits, w)


def shift_residual(state: PureState, r: int, w: str) -> PureState:
    """Residual on Z after the image register of the f_r oracle reads ``w``."""
    n = state.num_qubits
    joint = qsim.apply_gate(state.tensor(PureState.zeros(n)), f_r_oracle(n, r))
    return qsim.residual_state(joint, range(n, 2 * n), w)


def mode1_beta0_probability(residual: PureState, y0: str, y1: str, b_rot: int) -> float:
    """Exact Pr[beta = 0] for a mode-1 key measured on ``residual``."""
    rotated = qsim.apply_gate(residual, rotation_gate(y0, y1, b_rot))
    return qsim.born_distribution(rotated).prob(y0)


def mode1_key_counts(residual: PureState, y0: str, y1: str, b_rot: int, shots: int, rng: np.random.Generator) -> int:
    """Number of beta = 0 outcomes over ``shots`` rotated-basis measurements."""
    rotated = qsim.apply_gate(residual, rotation_gate(y0, y1, b_rot))
    counts = qsim.measure_shots(rotated, range(residual.num_qubits), shots, rng)
    return counts.get(y0, 0)


@dataclass(frozen=True)
class Mode0Puzzle:
    s: str
    c_id: int
    i: int
    x: str


@dataclass(frozen=True)
class Mode1Puzzle:
    s: str
    c_id: int
    y0: str
    y1: str
    b_rot: int


def owp_sampler_statepuzzle(
    gen: PurifiedGenerator,
    rng: np.random.Generator,
    b_mode: int | None = None,
    clifford: CliffordElement | None = None,
):
    """One (puzzle, key) draw of the one-way puzzle built from a state puzzle.

    ``b_mode`` and ``clifford`` pin those choices instead of drawing them.
    """
    inst = state_puzzle_from_sampler(gen, rng)
    n = inst.psi.num_qubits
    c = clifford if clifford is not None else designs.sample_clifford(n, rng)
    state = c.apply(inst.psi)
    if b_mode is None:
        b_mode = int(rng.integers(2))
    if b_mode == 0:
        i = int(rng.integers(n))
        x = ""
        if i:
            x, state = qsim.measure_subset(state, range(i), rng)
        beta, _ = qsim.measure_subset(state, [i], rng)
        return Mode0Puzzle(inst.s, c.seed, i, x), beta
    r = int(rng.integers(1, 1 << n))
    w, residual = shift_measurement(state, r, rng)
    y0, y1 = w, int_to_bits(bits_to_int(w) ^ r, n)
    if rng.integers(2):
        y0, y1 = y1, y0
    b_rot = int(rng.integers(2))
    rotated = qsim.apply_gate(residual, rotation_gate(y0, y1, b_rot))
    outcome, _ = qsim.measure_subset(rotated, range(n), rng)
    return Mode1Puzzle(inst.s, c.seed, y0, y1, b_rot), "0" if outcome == y0 else "1"


# ---------------------------------------------------------------------------
# Inverter for the state-puzzle one-way puzzle
# ---------------------------------------------------------------------------


class PuzzleInverter:
    """Brute-force inverter for puzzles derived from ``gen``.

    Mode-0 keys come from a (possibly noisy) sampler on the rotated state's
    output distribution; mode-1 keys have their Pr[beta = 0] moved by
    ``noise.epsilon`` toward the less likely value.
    """

    def __init__(self, gen: PurifiedGenerator, noise: NoiseSpec = NoiseSpec()):
        self.gen = gen
        self.noise = noise
        self._states: dict[tuple[str, int], PureState] = {}
        self._mode0: dict[tuple[str, int], SamplerOracle] = {}

    def rotated_state(self, s: str, c: CliffordElement) -> PureState:
        key = (s, c.seed)
        if key not in self._states:
            self._states[key] = c.apply(self.gen.state_for(s))
        return self._states[key]

    def mode0(self, s: str, c: CliffordElement) -> SamplerOracle:
        key = (s, c.seed)
        if key not in self._mode0:
            d = qsim.born_distribution(self.rotated_state(s, c))
            self._mode0[key] = noisy_sampler(d, self.noise)
        return self._mode0[key]

    def mode1_probability(self, s: str, c: CliffordElement, y0: str, y1: str, b_rot: int) -> float:
        residual = pair_restriction(self.rotated_state(s, c), y0, y1)
        if residual is None:
            return 0.5
        p = mode1_beta0_probability(residual, y0, y1, b_rot)
        eps = self.noise.epsilon
        return p - eps if p >= 0.5 else p + eps


@dataclass(frozen=True)
class SynthesisParams:
    """``trials=None`` asks the inverter for exact conditionals and key laws."""

    trials: int | None = None
    amplitude_floor: float = AMPLITUDE_FLOOR


@dataclass(frozen=True)
class PhaseEstimate:
    u: float
    v: float
    phi_hat: float


@dataclass
class SynthesisDiagnostics:
    pivot: str = ""
    amplitude_errors: dict[str, float] = field(default_factory=dict)
    phase_errors: dict[str, float] = field(default_factory=dict)
    inverter_sd: float = 0.0
    flagged_prefixes: list[str] = field(default_factory=list)

    def as_record(self) -> dict:
        amp = list(self.amplitude_errors.values())
        ph = list(self.phase_errors.values())
        return {
            "pivot": self.pivot,
            "max_amplitude_error": max(amp, default=0.0),
            "max_phase_error": max(ph, default=0.0),
            "inverter_sd": self.inverter_sd,
            "flagged_prefixes": list(self.flagged_prefixes),
            "amplitude_error_histogram": _histogram(amp),
            "phase_error_histogram": _histogram(ph),
        }


_HIST_EDGES = (0.0, 1e-9, 1e-6, 1e-3, 1e-2, 1e-1, np.inf)


def _histogram(values: Sequence[float]) -> list[int]:
    counts, _ = np.histogram(np.asarray(values, dtype=float), bins=_HIST_EDGES)
    return [int(c) for c in counts]


def amplitudes_from_estimates(n: int, estimates: dict[str, float]) -> np.ndarray:
    """Real amplitudes sqrt(prod of branch probabilities) over the prefix tree."""
    amps = np.zeros(1 << n)
    for idx in range(1 << n):
        x = int_to_bits(idx, n)
        weight = 1.0
        for i in range(n):
            p1 = estimates.get(x[:i])
            if p1 is None:
                weight = 0.0
                break
            weight *= p1 if x[i] == "1" else 1.0 - p1
            if weight == 0.0:
                break
        amps[idx] = np.sqrt(weight)
    return amps


def amplitude_synthesis(
    s: str,
    c: CliffordElement,
    inverter: PuzzleInverter,
    params: SynthesisParams,
    rng: np.random.Generator,
    diagnostics: SynthesisDiagnostics | None = None,
) -> tuple[PureState, dict[str, float]]:
    """Real-amplitude state from per-prefix next-bit estimates.

    Returns the state and the frozen estimates keyed by prefix.
    """
    sampler = inverter.mode0(s, c)
    n = sampler.num_bits
    estimates: dict[str, float] = {}
    frontier = [""]
    flagged = []
    for _ in range(n):
        nxt = []
        for z in frontier:
            try:
                if params.trials is None:
                    p1 = sampler.p_one(z)
                else:
                    p1 = sampler.next_bit_counts(z, params.trials, rng) / params.trials
            except UndefinedSupport:
                flagged.append(z)
                continue
            estimates[z] = p1
            if diagnostics is not None:
                true = dists.conditional_next_bit(sampler.base, z)
                if true.defined:
                    diagnostics.amplitude_errors[z] = abs(p1 - true.p1)
            if p1 < 1.0:
                nxt.append(z + "0")
            if p1 > 0.0:
                nxt.append(z + "1")
        frontier = nxt
    amps = amplitudes_from_estimates(n, estimates)
    amps = amps / np.linalg.norm(amps)
    if diagnostics is not None:
        diagnostics.flagged_prefixes.extend(flagged)
        diagnostics.inverter_sd = sampler.realized_sd
    return PureState(n, amps.astype(np.complex128)), estimates


def phase_estimate(
    s: str,
    c: CliffordElement,
    z: str,
    z_prime: str,
    inverter: PuzzleInverter,
    trials: int | None,
    rng: np.random.Generator,
) -> PhaseEstimate:
    """Relative phase of ``z_prime`` against the anchor ``z`` from rotated-basis key statistics."""
    if z == z_prime:
        raise ValueError("anchor and target must differ")
    freqs = []
    for b_rot in (0, 1):
        p0 = inverter.mode1_probability(s, c, z, z_prime, b_rot)
        if trials is None:
            freqs.append(p0)
        else:
            freqs.append(rng.binomial(trials, min(1.0, max(0.0, p0))) / trials)
    u = 2 * freqs[0] - 1
    v = 2 * freqs[1] - 1
    return PhaseEstimate(u, v, float(np.arctan2(v, u)))


def apply_phases(amps: np.ndarray, pivot: int, phases: dict[int, float]) -> np.ndarray:
    out = amps.astype(np.complex128).copy()
    for idx, phi in phases.items():
        if idx != pivot:
            out[idx] *= np.exp(-1j * phi)
    return out


@dataclass
class SynthesisResult:
    state: PureState
    fidelity: float
    diagnostics: SynthesisDiagnostics
    clifford: CliffordElement


def _wrap(angle: float) -> float:
    return float(abs((angle + np.pi) % (2 * np.pi) - np.pi))


def full_synthesis(
    s: str,
    inverter: PuzzleInverter,
    params: SynthesisParams,
    rng: np.random.Generator,
    clifford: CliffordElement | None = None,
) -> SynthesisResult:
    """Rebuild |psi_s> from inverter statistics and report its fidelity."""
    n = inverter.gen.state_bits
    c = clifford if clifford is not None else designs.sample_clifford(n, rng)
    diag = SynthesisDiagnostics()
    real_state, _ = amplitude_synthesis(s, c, inverter, params, rng, diag)
    pivot, _ = qsim.measure_subset(real_state, range(n), rng)
    diag.pivot = pivot
    pivot_idx = bits_to_int(pivot)
    amps = np.abs(real_state.amplitudes)
    target = inverter.rotated_state(s, c).amplitudes
    phases: dict[int, float] = {}
    for idx in np.flatnonzero(amps > params.amplitude_floor):
        idx = int(idx)
        if idx == pivot_idx:
            continue
        est = phase_estimate(s, c, pivot, int_to_bits(idx, n), inverter, params.trials, rng)
        phases[idx] = est.phi_hat
        if abs(target[idx]) > 0 and abs(target[pivot_idx]) > 0:
            # amplitudes are a e^{-i phi}; the relative phase is phi_z' - phi_pivot
            true_rel = float(np.angle(target[pivot_idx]) - np.angle(target[idx]))
            diag.phase_errors[int_to_bits(idx, n)] = _wrap(est.phi_hat - true_rel)
    phased = PureState(n, apply_phases(amps, pivot_idx, phases))
    out = c.apply_inverse(phased)
    fidelity = qsim.overlap_with_pure(out, inverter.gen.state_for(s), range(n))
    return SynthesisResult(out, fidelity, diag, c)


# ---------------------------------------------------------------------------
# Literal purified amplitude synthesis (small n)
# ---------------------------------------------------------------------------


def purified_amplitude_circuit(n: int, estimates: dict[str, float]) -> tuple[list[GateOp], int]:
    """Coherent circuit reproducing :func:`amplitudes_from_estimates`.

    For each level an oracle writes the index of the prefix's estimate into a
    work register, a rotation controlled by that register prepares the next
    qubit, and the oracle runs again to return the work register to |0>.
    Returns the gates and the total register width (Z first, work register last).
    """
    prefixes = sorted(estimates, key=lambda p: (len(p), p))
    index = {p: k + 1 for k, p in enumerate(prefixes)}  # 0 means "no estimate"
    width = max(1, int(np.ceil(np.log2(len(prefixes) + 1))))
    work = list(range(n, n + width))
    gates: list[GateOp] = []
    for level in range(n):
        def lookup(z: int, level=level) -> int:
            return index.get(int_to_bits(z, level), 0)

        if level == 0:
            load = qsim.permutation(work, _xor_table(width, index.get("", 0)), "load[0]")
        else:
            load = qsim.function_oracle(range(level), work, lookup, f"load[{level}]")
        block = np.zeros((1 << (width + 1),) * 2, dtype=np.complex128)
        for k in range(1 << width):
            p1 = estimates[prefixes[k - 1]] if 0 < k <= len(prefixes) else 0.0
            angle = 2 * np.arcsin(np.sqrt(min(1.0, max(0.0, p1))))
            cs, sn = np.cos(angle / 2), np.sin(angle / 2)
            block[2 * k:2 * k + 2, 2 * k:2 * k + 2] = [[cs, -sn], [sn, cs]]
        rot = qsim.unitary(work + [level], block, f"rot[{level}]")
        gates += [load, rot, load]
    return gates, n + width


def _xor_table(width: int, value: int) -> np.ndarray:
    return np.arange(1 << width) ^ value


def purified_amplitude_state(n: int, estimates: dict[str, float]) -> PureState:
    gates, total = purified_amplitude_circuit(n, estimates)
    return qsim.run_circuit(PureState.zeros(total), gates)


# ---------------------------------------------------------------------------
# Stability of arctan2 under perturbation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricCheck:
    lhs: float
    bound: float
    ok: bool
    rejected: bool = False


def _geom_preconditions(x, y, xs, ys, gamma, gamma_p):
    return (x * x + y * y >= gamma * gamma) & ((x - xs) ** 2 + (y - ys) ** 2 <= gamma_p * gamma_p) & (gamma_p < gamma)


def geometric_bound_check(x: float, y: float, x_star: float, y_star: float, gamma: float, gamma_prime: float) -> GeometricCheck:
    """|e^{-i atan2(y,x)} - e^{-i atan2(y*,x*)}| against 2 gamma'/gamma."""
    bound = 2 * gamma_prime / gamma if gamma > 0 else np.inf
    lhs = float(abs(np.exp(-1j * np.arctan2(y, x)) - np.exp(-1j * np.arctan2(y_star, x_star))))
    if not _geom_preconditions(x, y, x_star, y_star, gamma, gamma_prime):
        return GeometricCheck(lhs, bound, True, rejected=True)
    return GeometricCheck(lhs, bound, lhs <= bound)


def geometric_bound_batch(x, y, xs, ys, gamma, gamma_p):
    """Vectorized check; returns (lhs, bound, ok, valid) arrays."""
    lhs = np.abs(np.exp(-1j * np.arctan2(y, x)) - np.exp(-1j * np.arctan2(ys, xs)))
    bound = 2 * gamma_p / gamma
    valid = _geom_preconditions(x, y, xs, ys, gamma, gamma_p)
    return lhs, bound, (lhs <= bound) | ~valid, valid


def ray_chord(x, y, xs, ys):
    """|2 sin(zeta/2)| for the angle zeta between the rays through the two points."""
    zeta = np.arctan2(np.abs(x * ys - y * xs), x * xs + y * ys)
    return np.abs(2 * np.sin(zeta / 2))


def random_geometric_tuples(count: int, rng: np.random.Generator):
    """Exactly ``count`` tuples satisfying the preconditions, biased toward the boundary."""
    parts = []
    have = 0
    while have < count:
        batch = _geometric_candidates(max(1024, int(1.05 * (count - have))), rng)
        parts.append(batch)
        have += batch[0].shape[0]
    cols = [np.concatenate([p[j] for p in parts])[:count] for j in range(6)]
    return tuple(cols)


def _geometric_candidates(count: int, rng: np.random.Generator):
    gamma = rng.uniform(0.05, 2.0, count)
    gamma_p = gamma * rng.uniform(0.0, 1.0, count) ** 0.5
    radius = gamma * (1.0 + rng.exponential(0.1, count))
    angle = rng.uniform(-np.pi, np.pi, count)
    x, y = radius * np.cos(angle), radius * np.sin(angle)
    dr = gamma_p * rng.uniform(0.0, 1.0, count) ** 0.125
    da = rng.uniform(-np.pi, np.pi, count)
    xs, ys = x + dr * np.cos(da), y + dr * np.sin(da)
    keep = _geom_preconditions(x, y, xs, ys, gamma, gamma_p)
    return x[keep], y[keep], xs[keep], ys[keep], gamma[keep], gamma_p[keep]
