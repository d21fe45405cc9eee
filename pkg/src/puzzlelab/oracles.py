"""Brute-force adversaries: post-selected samplers and probability oracles."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import dists
from .errors import InfeasibleNoise, UndefinedSupport
from .qsim import Distribution, bits_to_int, int_to_bits, statistical_distance

NOISE_MODES = ("none", "mass-shift", "prefix-corrupt")
SD_TOL = 1e-6


@dataclass(frozen=True)
class NoiseSpec:
    epsilon: float = 0.0
    mode: str = "none"

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError("epsilon must lie in [0, 1)")
        if self.mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.mode == "none" and self.epsilon != 0.0:
            raise ValueError("mode 'none' requires epsilon = 0")


class SamplerOracle:
    """Prefix-conditional sampler backed by an exact probability table.

    ``table`` is the distribution actually served; it equals ``base`` for a
    perfect sampler and sits at statistical distance ``noise.epsilon`` from
    it otherwise.
    """

    def __init__(self, base: Distribution, table: Distribution, noise: NoiseSpec = NoiseSpec()):
        self.base = base
        self.table = table
        self.noise = noise
        self.num_bits = base.num_bits
        self.realized_sd = statistical_distance(base, table)

    def conditional(self, prefix: str) -> dists.PrefixQuery:
        return dists.conditional_next_bit(self.table, prefix)

    def p_one(self, prefix: str) -> float:
        q = self.conditional(prefix)
        if not q.defined:
            raise UndefinedSupport(prefix)
        return q.p1

    def query(self, prefix: str, rng: np.random.Generator) -> str:
        """Sample the remaining bits conditioned on ``prefix``."""
        k = len(prefix)
        width = 1 << (self.num_bits - k)
        start = bits_to_int(prefix) * width
        block = self.table.probs[start:start + width]
        total = block.sum()
        if total <= 0:
            raise UndefinedSupport(prefix)
        idx = rng.choice(width, p=block / total)
        return int_to_bits(int(idx), self.num_bits - k)

    def next_bit_counts(self, prefix: str, trials: int, rng: np.random.Generator) -> int:
        """Number of ones among the first suffix bits of ``trials`` independent queries.

        Distributionally identical to calling :meth:`query` ``trials`` times.
        """
        return int(rng.binomial(trials, self.p_one(prefix)))


def perfect_postselected_sampler(d: Distribution) -> SamplerOracle:
    return SamplerOracle(d, d)


def _prefixes_by_mass(d: Distribution, lengths) -> list[tuple[float, int, int]]:
    out = []
    for length in lengths:
        masses = d.marginal(length)
        for value in np.flatnonzero(masses > 0):
            out.append((-float(masses[value]), length, int(value)))
    out.sort()
    return out


def _is_below(length: int, value: int, marked: list[tuple[int, int]]) -> bool:
    for mlen, mval in marked:
        if mlen <= length and value >> (length - mlen) == mval:
            return True
    return False


def _mass_shift(d: Distribution, eps: float) -> np.ndarray:
    n = d.num_bits
    p = d.probs.copy()
    remaining = eps
    marked: list[tuple[int, int]] = []
    for neg_mass, length, value in _prefixes_by_mass(d, range(n)):
        if remaining <= 0:
            break
        if _is_below(length, value, marked):
            continue
        w = -neg_mass
        half = 1 << (n - length - 1)
        lo = (2 * value) * half
        kids = [d.probs[lo:lo + half], d.probs[lo + half:lo + 2 * half]]
        m0, m1 = kids[0].sum(), kids[1].sum()
        heavy = 0 if m0 >= m1 else 1
        p_heavy = (m0, m1)[heavy] / w
        delta = min(p_heavy, remaining / w)
        src, dst = kids[heavy], kids[1 - heavy]
        src_lo = lo + heavy * half
        dst_lo = lo + (1 - heavy) * half
        moved = w * delta
        m_src = src.sum()
        m_dst = dst.sum()
        p[src_lo:src_lo + half] = src * (1 - moved / m_src)
        if m_dst > 0:
            p[dst_lo:dst_lo + half] = dst * (1 + moved / m_dst)
        else:
            # empty branch: give it the donor branch's suffix profile
            p[dst_lo:dst_lo + half] = src * (moved / m_src)
        remaining -= moved
        marked.append((length, value))
    if remaining > SD_TOL:
        raise InfeasibleNoise(f"mass-shift can realize at most {eps - remaining:.6g}, requested {eps}")
    return p


def _prefix_corrupt(d: Distribution, eps: float) -> np.ndarray:
    n = d.num_bits
    p = d.probs.copy()
    remaining = eps
    for neg_mass, length, value in _prefixes_by_mass(d, [n - 1]):
        if remaining <= 0:
            break
        w = -neg_mass
        i0, i1 = 2 * value, 2 * value + 1
        gap = abs(p[i0] - p[i1])
        if gap == 0:
            continue
        heavy, light = (i0, i1) if p[i0] > p[i1] else (i1, i0)
        moved = min(gap, remaining)
        p[heavy] -= moved
        p[light] += moved
        remaining -= moved
    if remaining > SD_TOL:
        raise InfeasibleNoise(f"prefix-corrupt can realize at most {eps - remaining:.6g}, requested {eps}")
    return p


def noisy_sampler(d: Distribution, spec: NoiseSpec, rng: np.random.Generator | None = None) -> SamplerOracle:
    """Sampler whose served distribution is at statistical distance ``spec.epsilon`` from ``d``.

    The construction is deterministic; ``rng`` is accepted for interface symmetry.
    """
    if spec.epsilon == 0.0:
        return SamplerOracle(d, d, spec)
    if spec.mode == "mass-shift":
        p = _mass_shift(d, spec.epsilon)
    else:
        p = _prefix_corrupt(d, spec.epsilon)
    table = Distribution(d.num_bits, np.clip(p, 0.0, None) / p.sum())
    oracle = SamplerOracle(d, table, spec)
    if abs(oracle.realized_sd - spec.epsilon) > SD_TOL:
        raise InfeasibleNoise(f"realized SD {oracle.realized_sd!r} misses requested {spec.epsilon!r}")
    return oracle


# ---------------------------------------------------------------------------
# Probability oracles
# ---------------------------------------------------------------------------


def _key_hash(key: str) -> int:
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


class ProbOracle:
    """Answers probability queries, optionally with multiplicative noise.

    Answers are a fixed function of the key: each key gets its own
    perturbation derived from ``seed``, so repeated queries agree.
    """

    def __init__(
        self,
        lookup: Callable[[str], float] | Mapping[str, float] | Distribution,
        num_bits: int,
        rel_error: float = 0.0,
        fail_prob: float = 0.0,
        seed: int = 0,
    ):
        if rel_error < 0 or not 0.0 <= fail_prob <= 1.0:
            raise ValueError("rel_error must be >= 0 and fail_prob in [0, 1]")
        if isinstance(lookup, Distribution):
            dist = lookup
            self._lookup = dist.prob
        elif isinstance(lookup, Mapping):
            table = lookup
            self._lookup = lambda key: float(table.get(key, 0.0))
        else:
            self._lookup = lookup
        self.num_bits = num_bits
        self.rel_error = rel_error
        self.fail_prob = fail_prob
        self.seed = seed
        self.queries = 0

    @property
    def exact(self) -> bool:
        return self.rel_error == 0.0 and self.fail_prob == 0.0

    def true_value(self, key: str) -> float:
        return self._lookup(key)

    def query(self, key: str) -> float:
        self.queries += 1
        truth = self._lookup(key)
        if self.exact:
            return truth
        rng = np.random.default_rng([self.seed, _key_hash(key)])
        if truth <= 0:
            # off-support answers are unconstrained; use a reproducible small positive value
            return 2.0 / (1 << self.num_bits) * (1.0 - rng.random())
        if rng.random() < self.fail_prob:
            return truth * float(np.exp(rng.uniform(-1.0, 1.0)))
        return truth * (1.0 + rng.uniform(-self.rel_error, self.rel_error))

    __call__ = query


def exact_prob_oracle(d: Distribution) -> ProbOracle:
    return ProbOracle(d, d.num_bits)


def noisy_prob_oracle(d: Distribution, rel_error: float, fail_prob: float, rng: np.random.Generator) -> ProbOracle:
    return ProbOracle(d, d.num_bits, rel_error, fail_prob, seed=int(rng.integers(2**63)))
