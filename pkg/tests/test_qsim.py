import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puzzlelab import dists, qsim
from puzzlelab.errors import DimensionMismatch, NonUnitaryGate, QubitCapExceeded
from puzzlelab.qsim import Distribution, PureState

import brute


def ghz(n):
    return qsim.run_circuit(PureState.zeros(n), [qsim.h(0)] + [qsim.cnot(q, q + 1) for q in range(n - 1)])


def random_state(n, rng):
    v = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
    return PureState.from_vector(v, normalize=True)


# -- apply_gate ---------------------------------------------------------------


def test_hadamard_on_zero():
    out = qsim.apply_gate(PureState.zeros(1), qsim.h(0))
    np.testing.assert_allclose(out.amplitudes, [2**-0.5, 2**-0.5], atol=1e-12)


def test_identity_leaves_state():
    psi = random_state(3, np.random.default_rng(0))
    out = qsim.apply_gate(psi, qsim.identity(1))
    np.testing.assert_allclose(out.amplitudes, psi.amplitudes, atol=1e-15)


def test_x_flips():
    out = qsim.apply_gate(PureState.zeros(1), qsim.x(0))
    assert out.amplitude("1") == pytest.approx(1.0)


def test_input_not_mutated():
    psi = PureState.zeros(2)
    before = psi.amplitudes.copy()
    qsim.apply_gate(psi, qsim.h(1))
    np.testing.assert_array_equal(psi.amplitudes, before)
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 0


def test_gate_errors():
    with pytest.raises(NonUnitaryGate):
        qsim.unitary(0, [[1, 1], [0, 1]])
    with pytest.raises(DimensionMismatch):
        qsim.unitary([0, 1], np.eye(2))
    with pytest.raises(IndexError):
        qsim.apply_gate(PureState.zeros(2), qsim.h(2))
    with pytest.raises(NonUnitaryGate):
        qsim.permutation([0], [0, 0])


def test_qubit_cap():
    with pytest.raises(QubitCapExceeded):
        PureState.zeros(qsim.MAX_QUBITS + 1)


def test_bit_order_msb_first():
    psi = qsim.apply_gate(PureState.zeros(3), qsim.x(0))
    assert psi.amplitude("100") == pytest.approx(1.0)
    assert qsim.bits_to_int("100") == 4


@pytest.mark.parametrize("seed", range(5))
def test_random_circuit_against_kronecker(seed):
    n = 4
    gates = dists.sample_circuit(dists.CircuitFamily("random-universal", n, 5, seed))
    gates.append(qsim.cnot(3, 0))
    gates.append(qsim.function_oracle([0, 2], [1, 3], lambda a: (3 * a + 1) % 4))
    psi = qsim.run_circuit(PureState.zeros(n), gates)
    ref = brute.circuit_unitary(gates, n)[:, 0]
    np.testing.assert_allclose(psi.amplitudes, ref, atol=1e-12)


def test_invert_circuit_round_trip():
    gates = dists.sample_circuit(dists.CircuitFamily("random-universal", 3, 4, 11))
    psi = random_state(3, np.random.default_rng(1))
    back = qsim.run_circuit(qsim.run_circuit(psi, gates), qsim.invert_circuit(gates))
    np.testing.assert_allclose(back.amplitudes, psi.amplitudes, atol=1e-12)


# -- measurement ----------------------------------------------------------------


def test_bell_measurement():
    bell = ghz(2)
    rng = np.random.default_rng(3)
    outcomes = []
    for _ in range(2000):
        out, post = qsim.measure_subset(bell, [0], rng)
        outcomes.append(out)
        np.testing.assert_allclose(abs(post.amplitude(out + out)), 1.0, atol=1e-12)
    frac = outcomes.count("0") / len(outcomes)
    assert abs(frac - 0.5) < 4 * 0.5 / np.sqrt(2000)


def test_basis_state_measurement_certain():
    out, post = qsim.measure_subset(PureState.basis("1"), [0], np.random.default_rng(0))
    assert out == "1"
    assert post.amplitude("1") == pytest.approx(1.0)


def test_ghz_pair_outcomes():
    rng = np.random.default_rng(4)
    seen = {qsim.measure_subset(ghz(3), [0, 1], rng)[0] for _ in range(200)}
    assert seen == {"00", "11"}


def test_measure_errors():
    with pytest.raises(IndexError):
        qsim.measure_subset(PureState.zeros(2), [2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        qsim.measure_subset(PureState.zeros(2), [0, 0], np.random.default_rng(0))


def test_born_small_examples():
    assert qsim.born_distribution(qsim.apply_gate(PureState.zeros(1), qsim.h(0))).as_dict() == pytest.approx({"0": 0.5, "1": 0.5})
    assert qsim.born_distribution(ghz(3)).as_dict() == pytest.approx({"000": 0.5, "111": 0.5})


def test_born_matches_sampled_histogram():
    n = 4
    gates = dists.sample_circuit(dists.CircuitFamily("random-universal", n, 6, 2024))
    psi = qsim.run_circuit(PureState.zeros(n), gates)
    exact = qsim.born_distribution(psi)
    counts = qsim.measure_shots(psi, range(n), 10**6, np.random.default_rng(5))
    emp = {k: v / 10**6 for k, v in counts.items()}
    assert brute.sd(emp, exact.as_dict()) <= 0.01


def test_measure_subset_histogram():
    # slower path through measure_subset itself
    n = 3
    gates = dists.sample_circuit(dists.CircuitFamily("random-universal", n, 4, 8))
    psi = qsim.run_circuit(PureState.zeros(n), gates)
    rng = np.random.default_rng(6)
    trials = 20000
    counts = {}
    for _ in range(trials):
        out, _ = qsim.measure_subset(psi, range(n), rng)
        counts[out] = counts.get(out, 0) + 1
    emp = {k: v / trials for k, v in counts.items()}
    assert brute.sd(emp, qsim.born_distribution(psi).as_dict()) <= 0.02


def test_marginals_consistent():
    rng = np.random.default_rng(7)
    psi = random_state(5, rng)
    full = qsim.born_distribution(psi).as_dict()
    for qubits in ([0], [4, 1], [2, 0, 3], [1, 2, 3, 4, 0]):
        ref = {}
        for x, p in full.items():
            key = "".join(x[q] for q in qubits)
            ref[key] = ref.get(key, 0.0) + p
        got = qsim.born_distribution(psi, qubits).as_dict()
        assert set(got) == set(ref)
        for key in ref:
            assert abs(got[key] - ref[key]) <= 1e-12


def test_residual_and_project():
    psi = ghz(3)
    post = qsim.project(psi, [1], "1")
    assert abs(post.amplitude("111")) == pytest.approx(1.0)
    rest = qsim.residual_state(psi, [1], "0")
    assert rest.num_qubits == 2
    assert abs(rest.amplitude("00")) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        qsim.project(PureState.zeros(2), [0], "1")


# -- distances ------------------------------------------------------------------


def test_sd_examples():
    a = Distribution.from_dict({"0": 0.75, "1": 0.25})
    b = Distribution.from_dict({"0": 0.25, "1": 0.75})
    assert qsim.statistical_distance(a, a) == 0
    assert qsim.statistical_distance(Distribution.point("0"), Distribution.point("1")) == 1
    assert qsim.statistical_distance(a, b) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        qsim.statistical_distance(a, Distribution.uniform(2))


def _dist(rng, n):
    p = rng.dirichlet(np.ones(1 << n) * 0.5)
    return Distribution(n, p / p.sum())


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
@settings(max_examples=200, deadline=None)
def test_sd_is_metric(seed, n):
    rng = np.random.default_rng(seed)
    a, b, c = (_dist(rng, n) for _ in range(3))
    ab = qsim.statistical_distance(a, b)
    assert 0 <= ab <= 1
    assert abs(ab - qsim.statistical_distance(b, a)) <= 1e-12
    assert ab <= qsim.statistical_distance(a, c) + qsim.statistical_distance(c, b) + 1e-12


def test_trace_distance_examples():
    psi = random_state(2, np.random.default_rng(9))
    assert qsim.trace_distance_pure(psi, psi) == pytest.approx(0.0, abs=1e-7)
    assert qsim.trace_distance_pure(PureState.basis("0"), PureState.basis("1")) == pytest.approx(1.0)


def test_trace_distance_below_euclidean():
    rng = np.random.default_rng(10)
    for _ in range(10_000):
        n = int(rng.integers(1, 4))
        a = random_state(n, rng)
        # nearby states make the bound tight
        b = PureState.from_vector(a.amplitudes + rng.uniform(0, 1) * (rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)), normalize=True)
        assert qsim.trace_distance_pure(a, b) <= np.linalg.norm(a.amplitudes - b.amplitudes) + 1e-12


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_trace_distance_property(seed):
    rng = np.random.default_rng(seed)
    a, b = random_state(3, rng), random_state(3, rng)
    assert qsim.trace_distance_pure(a, b) <= np.linalg.norm(a.amplitudes - b.amplitudes) + 1e-12


def test_overlap_with_pure_examples():
    target = PureState.from_vector([0.6, 0.8j])
    perp = PureState.from_vector([0.8, -0.6j])
    junk = PureState.from_vector([0.5, 0.5, 0.5, 0.5])
    assert qsim.overlap_with_pure(target.tensor(junk), target, [0]) == pytest.approx(1.0)
    assert qsim.overlap_with_pure(perp.tensor(junk), target, [0]) == pytest.approx(0.0, abs=1e-12)
    mixed = (target.tensor(PureState.basis("0")).amplitudes + perp.tensor(PureState.basis("1")).amplitudes) / np.sqrt(2)
    assert qsim.overlap_with_pure(PureState(2, mixed), target, [0]) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatch):
        qsim.overlap_with_pure(target.tensor(junk), junk, [0])


def test_overlap_with_pure_against_density_matrix():
    rng = np.random.default_rng(12)
    joint = random_state(4, rng)
    target = random_state(2, rng)
    sub = [3, 1]
    # reduced density matrix by explicit partial trace
    psi = np.moveaxis(joint.amplitudes.reshape((2,) * 4), sub, [0, 1]).reshape(4, 4)
    rho = psi @ psi.conj().T
    ref = float(np.real(target.amplitudes.conj() @ rho @ target.amplitudes))
    assert qsim.overlap_with_pure(joint, target, sub) == pytest.approx(ref, abs=1e-12)


def test_distribution_json_sorted():
    d = Distribution.from_dict({"11": 0.25, "00": 0.75})
    assert d.to_json() == '{"00": 0.75, "11": 0.25}'
    with pytest.raises(ValueError):
        Distribution.from_dict({"0": 0.5})
