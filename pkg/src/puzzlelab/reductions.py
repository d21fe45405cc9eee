"""Classical reductions: probability approximation, puzzle constructions,
ratio estimation and pseudo-deterministic sampling."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import dists
from .dists import CircuitFamily
from .errors import DegenerateQuery, UndefinedSupport
from .oracles import ProbOracle, SamplerOracle
from .qsim import Distribution, bits_to_int, int_to_bits


@dataclass(frozen=True)
class ReductionParams:
    samples_per_bit: int
    n: int
    rel_target: float = 0.25

    def __post_init__(self):
        if self.samples_per_bit < 1:
            raise ValueError("samples_per_bit must be >= 1")
        if not 0.0 < self.rel_target < 1.0:
            raise ValueError("rel_target must lie in (0, 1)")


@dataclass(frozen=True)
class Estimate:
    value: float
    flagged: bool = False
    factors: tuple[float, ...] = ()

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class PuzzleRecord:
    puzzle: tuple
    key: str
    mode: str = "owp"


# ---------------------------------------------------------------------------
# Probability approximation from samplers and inverters
# ---------------------------------------------------------------------------


def _frequency_product(x: str, oracle: SamplerOracle, params: ReductionParams, rng) -> Estimate:
    m = params.samples_per_bit
    factors = []
    for i, bit in enumerate(x):
        try:
            ones = oracle.next_bit_counts(x[:i], m, rng)
        except UndefinedSupport:
            return Estimate(0.0, flagged=True, factors=tuple(factors))
        factors.append((ones if bit == "1" else m - ones) / m)
    return Estimate(float(np.prod(factors)), factors=tuple(factors))


def approx_probability(v: str, sampler: SamplerOracle, params: ReductionParams, rng: np.random.Generator) -> Estimate:
    """Estimate Pr[v] as a product of next-bit frequencies from post-selected samples."""
    if len(v) != sampler.num_bits:
        raise ValueError("query length does not match the distribution")
    return _frequency_product(v, sampler, params, rng)


def prob_approx_from_inverter(x: str, inverter: SamplerOracle, params: ReductionParams, rng: np.random.Generator) -> Estimate:
    """Estimate Pr[x] from an inverter of the prefix puzzle.

    Factor j is the fraction of inverter answers on puzzle (j, x[:j]) equal to x[j].
    """
    if len(x) != inverter.num_bits:
        raise ValueError("query length does not match the distribution")
    return _frequency_product(x, inverter, params, rng)


def product_error_check(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Return (|prod a - prod b|, 2 n delta prod a) with delta the worst relative factor gap."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    delta = float(np.max(np.abs(a - b) / a))
    pa = float(np.prod(a))
    return abs(pa - float(np.prod(b))), 2 * len(a) * delta * pa


# ---------------------------------------------------------------------------
# One-way puzzle from a distribution
# ---------------------------------------------------------------------------


def owp_from_distribution(d: Distribution, rng: np.random.Generator, i: int | None = None) -> PuzzleRecord:
    """Puzzle (i, x[:i]) with key x[i] for x drawn from ``d``."""
    n = d.num_bits
    if i is None:
        i = int(rng.integers(n))
    x = d.sample(rng)
    return PuzzleRecord((i, x[:i]), x[i])


def owp_verify(d: Distribution, record: PuzzleRecord) -> bool:
    _, prefix = record.puzzle
    return d.prefix_mass(prefix + record.key) > 0


def owp_joint(d: Distribution, served: Distribution | None = None) -> dict[tuple[int, str, str], float]:
    """Exact law of (i, prefix, key); keys are drawn from ``served`` conditionals when given."""
    n = d.num_bits
    served = served or d
    out = {}
    for i in range(n):
        masses = d.marginal(i)
        p1 = dists.conditional_table(served, i)
        for value in np.flatnonzero(masses > 0):
            prefix = int_to_bits(int(value), i)
            w = masses[value] / n
            q1 = p1[value]
            if np.isnan(q1):
                continue
            for key, q in (("0", 1.0 - q1), ("1", q1)):
                if q > 0:
                    out[(i, prefix, key)] = float(w * q)
    return out


# ---------------------------------------------------------------------------
# The distribution D_n built from a puzzle sampler, and key recovery
# ---------------------------------------------------------------------------


def _check_joint(joint: Distribution, n: int) -> None:
    if joint.num_bits != 2 * n:
        raise ValueError("puzzle sampler must emit n-bit puzzles and n-bit keys")


def dist_from_owp(joint: Distribution, n: int, rng: np.random.Generator) -> tuple[str, str]:
    """One draw (x, beta) of D_n for a puzzle sampler given by its (s || k) table."""
    _check_joint(joint, n)
    sk = joint.sample(rng)
    s, k = sk[:n], sk[n:]
    i = int(rng.integers(n))
    b_mode = int(rng.integers(2))
    beta = str(int(rng.integers(2))) if b_mode == 0 else k[i]
    return s + k[:i], beta


def dn_table(joint: Distribution, n: int) -> dict[str, float]:
    """Exact D_n, keyed by the concatenation x || beta (its length fixes i)."""
    _check_joint(joint, n)
    out = {}
    for j in range(n):
        prefix_mass = joint.marginal(n + j)
        child_mass = joint.marginal(n + j + 1)
        for value in np.flatnonzero(prefix_mass > 0):
            head = int_to_bits(int(value), n + j)
            for b in (0, 1):
                pr = (prefix_mass[value] / 4 + child_mass[2 * value + b] / 2) / n
                out[head + str(b)] = float(pr)
    return out


def key_bit_probability(s: str, prefix: str, oracle: ProbOracle) -> tuple[float, float]:
    """Return (clipped pi, raw pi) for the next key bit."""
    a1 = oracle.query(s + prefix + "1")
    a0 = oracle.query(s + prefix + "0")
    if a0 + a1 == 0:
        raise DegenerateQuery(f"both answers vanish at {s + prefix!r}")
    raw = (3 * a1 - a0) / (2 * (a1 + a0))
    return min(1.0, max(0.0, raw)), raw


def key_bit_sampler(s: str, prefix: str, oracle: ProbOracle, rng: np.random.Generator) -> str:
    pi, _ = key_bit_probability(s, prefix, oracle)
    return "1" if rng.random() < pi else "0"


def full_key_sampler(s: str, oracle: ProbOracle, rng: np.random.Generator, n: int | None = None) -> str:
    n = len(s) if n is None else n
    key = ""
    for _ in range(n):
        key += key_bit_sampler(s, key, oracle, rng)
    return key


@dataclass
class KeyTree:
    """Exact output law of the full key sampler on one puzzle."""

    probs: dict[str, float]
    clipped: int = 0
    max_gap: float = 0.0
    gaps: list[float] = field(default_factory=list)


def key_sampler_tree(s: str, oracle: ProbOracle, n: int, truth: Distribution | None = None) -> KeyTree:
    """Enumerate the key sampler's outcome tree.

    With ``truth`` (the (s || k) table) the per-bit gap |pi - p_1| is recorded
    at every visited prefix of positive true mass.
    """
    tree = KeyTree({})
    frontier = {"": 1.0}
    for _ in range(n):
        nxt: dict[str, float] = {}
        for prefix, w in frontier.items():
            pi, raw = key_bit_probability(s, prefix, oracle)
            if raw != pi:
                tree.clipped += 1
            if truth is not None:
                q = dists.conditional_next_bit(truth, s + prefix)
                if q.defined:
                    gap = abs(pi - q.p1)
                    tree.gaps.append(gap)
                    tree.max_gap = max(tree.max_gap, gap)
            for bit, pb in (("1", pi), ("0", 1.0 - pi)):
                if pb > 0:
                    nxt[prefix + bit] = nxt.get(prefix + bit, 0.0) + w * pb
        frontier = nxt
    tree.probs = frontier
    return tree


def key_recovery_sd(joint: Distribution, n: int, oracle: ProbOracle) -> tuple[float, list[KeyTree]]:
    """SD between the true (s, k) law and (s, key sampler(s)), by exact enumeration."""
    _check_joint(joint, n)
    s_mass = joint.marginal(n)
    total = 0.0
    trees = []
    for value in np.flatnonzero(s_mass > 0):
        s = int_to_bits(int(value), n)
        tree = key_sampler_tree(s, oracle, n, truth=joint)
        trees.append(tree)
        block = joint.probs[value << n:(value + 1) << n]
        model = np.zeros(1 << n)
        for key, p in tree.probs.items():
            model[bits_to_int(key)] = p * s_mass[value]
        total += 0.5 * np.abs(block - model).sum()
    return float(total), trees


# ---------------------------------------------------------------------------
# Dual-mode distribution and ratio estimation
# ---------------------------------------------------------------------------


@dataclass
class DualModeEnsemble:
    """Families indexed by l; each contributes ``ensemble_size`` equally likely circuits."""

    families: list[CircuitFamily]
    ensemble_size: int = 1
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.families:
            raise ValueError("need at least one family")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be positive")

    def circuit_ids(self) -> list[str]:
        return [f"{l}.{c}" for l in range(len(self.families)) for c in range(self.ensemble_size)]

    def distribution(self, c_id: str) -> Distribution:
        if c_id not in self._cache:
            l, c = (int(t) for t in c_id.split("."))
            fam = self.families[l]
            rng = np.random.default_rng([fam.seed, c])
            self._cache[c_id] = dists.family_distribution(fam, rng)
        return self._cache[c_id]

    def width(self, c_id: str) -> int:
        return self.families[int(c_id.split(".")[0])].num_qubits


def dual_key(b_mode: int, c_id: str, x: str) -> str:
    return f"{b_mode}|{c_id}|{x}"


def dual_mode_dist(ensemble: DualModeEnsemble, rng: np.random.Generator) -> tuple[int, str, str]:
    l = int(rng.integers(len(ensemble.families)))
    c = int(rng.integers(ensemble.ensemble_size))
    c_id = f"{l}.{c}"
    b_mode = int(rng.integers(2))
    if b_mode == 0:
        return 0, c_id, "0" * ensemble.width(c_id)
    return 1, c_id, ensemble.distribution(c_id).sample(rng)


def dual_mode_table(ensemble: DualModeEnsemble) -> dict[str, float]:
    """Exact law of dual_mode_dist keyed by :func:`dual_key`."""
    w = 1.0 / (len(ensemble.families) * ensemble.ensemble_size)
    out: dict[str, float] = {}
    for c_id in ensemble.circuit_ids():
        ell = ensemble.width(c_id)
        out[dual_key(0, c_id, "0" * ell)] = 0.5 * w
        for x, p in ensemble.distribution(c_id).as_dict().items():
            out[dual_key(1, c_id, x)] = 0.5 * w * p
    return out


def ratio_estimator(c_id: str, x: str, oracle: ProbOracle) -> Estimate:
    num = oracle.query(dual_key(1, c_id, x))
    den = oracle.query(dual_key(0, c_id, "0" * len(x)))
    if den == 0:
        return Estimate(float("inf"), flagged=True)
    return Estimate(num / den)


# ---------------------------------------------------------------------------
# Pseudo-deterministic sampling
# ---------------------------------------------------------------------------


def draw_randomness(n: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Blocks R_1..R_n, integers in [1, 2^n]."""
    shape = (n,) if size is None else (size, n)
    return rng.integers(1, (1 << n) + 1, size=shape)


def pseudodet_sample(r: Sequence[int], sampler: SamplerOracle, params: ReductionParams, rng: np.random.Generator) -> str | None:
    """Threshold each next-bit estimate against its block; ``None`` flags an abort."""
    n = sampler.num_bits
    m = params.samples_per_bit
    if len(r) != n:
        raise ValueError("need one randomness block per bit")
    scale = 1 << n
    out = ""
    for i in range(n):
        try:
            ones = sampler.next_bit_counts(out, m, rng)
        except UndefinedSupport:
            return None
        # 2^n * (ones / m) > R  without rounding
        out += "1" if scale * ones > int(r[i]) * m else "0"
    return out


def pseudodet_batch(R: np.ndarray, sampler: SamplerOracle, params: ReductionParams, rng: np.random.Generator) -> list[str | None]:
    """Vectorized :func:`pseudodet_sample` over the rows of ``R``."""
    n = sampler.num_bits
    m = params.samples_per_bit
    R = np.asarray(R, dtype=np.int64)
    rows = R.shape[0]
    prefix = np.zeros(rows, dtype=np.int64)
    alive = np.ones(rows, dtype=bool)
    scale = 1 << n
    for i in range(n):
        p1 = dists.conditional_table(sampler.table, i)[prefix]
        undefined = np.isnan(p1)
        alive &= ~undefined
        ones = rng.binomial(m, np.where(undefined, 0.0, p1))
        bit = (scale * ones > R[:, i] * m).astype(np.int64)
        prefix = 2 * prefix + bit
    return [int_to_bits(int(v), n) if ok else None for v, ok in zip(prefix, alive)]


@dataclass(frozen=True)
class ProbeResult:
    error: float
    modal_output: str | None
    threshold_adjacent: bool


def determinism_error_probe(
    r: Sequence[int],
    sampler: SamplerOracle,
    params: ReductionParams,
    repeats: int,
    rng: np.random.Generator,
    adjacency_sigmas: float = 3.0,
) -> ProbeResult:
    """1 - modal frequency of the output over ``repeats`` runs at fixed ``r``.

    The result is flagged threshold-adjacent when some block on the modal
    path lies within ``adjacency_sigmas`` standard deviations of 2^n e.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    R = np.tile(np.asarray(r, dtype=np.int64), (repeats, 1))
    outputs = pseudodet_batch(R, sampler, params, rng)
    modal, count = Counter(outputs).most_common(1)[0]
    n = sampler.num_bits
    scale = 1 << n
    adjacent = False
    path = modal or ""
    for i in range(len(path)):
        q = sampler.conditional(path[:i])
        if not q.defined:
            break
        sigma = scale * np.sqrt(q.p1 * q.p0 / params.samples_per_bit)
        if abs(scale * q.p1 - int(r[i])) <= adjacency_sigmas * sigma:
            adjacent = True
    return ProbeResult(1.0 - count / repeats, modal, adjacent)
