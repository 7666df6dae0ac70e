from math import sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbutterfly import qsim
from qbutterfly.qsim import StateVector

from conftest import random_state, states_equal_up_to_phase

SQRT2_INV = 1 / sqrt(2)


def bell_projector_probability(state, q1, q2, vec):
    """Brute-force <psi| P |psi> with P built as a full 2^n x 2^n matrix."""
    n = state.num_qubits
    # permute so (q1, q2) lead, then P = |B><B| (x) I
    psi = np.moveaxis(state.tensor_view(), [q1, q2], [0, 1]).reshape(-1)
    proj = np.kron(np.outer(vec, vec.conj()), np.eye(2 ** (n - 2)))
    return float(np.vdot(psi, proj @ psi).real)


# -- preparation ----------------------------------------------------------


def test_prepare_arbitrary_basis_and_plus():
    assert np.allclose(qsim.prepare_arbitrary(1, 0).amplitudes, [1, 0])
    assert np.allclose(qsim.prepare_arbitrary(SQRT2_INV, SQRT2_INV).amplitudes, [SQRT2_INV, SQRT2_INV])


def test_prepare_arbitrary_probabilities():
    s = qsim.prepare_arbitrary(0.6, 0.8j)
    assert np.allclose(s.probabilities(), [0.36, 0.64], atol=1e-12)


def test_prepare_arbitrary_renormalizes():
    s = qsim.prepare_arbitrary(3, 4)
    assert np.allclose(s.amplitudes, [0.6, 0.8])


def test_prepare_arbitrary_degenerate():
    with pytest.raises(qsim.DegenerateStateError):
        qsim.prepare_arbitrary(0, 0)


@pytest.mark.parametrize("n,indices", [(2, (0, 3)), (3, (0, 7)), (5, (0, 31))])
def test_prepare_ghz(n, indices):
    amps = qsim.prepare_ghz(n).amplitudes
    expected = np.zeros(2**n)
    expected[list(indices)] = SQRT2_INV
    assert np.allclose(amps, expected, atol=1e-15)


def test_prepare_ghz_too_small():
    with pytest.raises(qsim.InvalidSizeError):
        qsim.prepare_ghz(1)


def test_qubit_cap():
    with pytest.raises(qsim.InvalidSizeError):
        qsim.tensor(qsim.prepare_ghz(12), qsim.prepare_ghz(13))


# -- tensor / gates ---------------------------------------------------------


def test_tensor_basis():
    s = qsim.tensor(qsim.prepare_arbitrary(1, 0), qsim.prepare_arbitrary(0, 1))
    assert np.allclose(s.amplitudes, [0, 1, 0, 0])


def test_tensor_plus_plus():
    s = qsim.tensor(qsim.prepare_plus(), qsim.prepare_plus())
    assert np.allclose(s.amplitudes, [0.5] * 4)


def test_tensor_input_with_ghz_matches_hand_expansion():
    alpha, beta = 0.6, 0.8j
    s = qsim.tensor(qsim.prepare_arbitrary(alpha, beta), qsim.prepare_ghz(3))
    # (a|0> + b|1>)(|000> + |111>)/sqrt2 -> |0000>, |0111>, |1000>, |1111>
    expected = np.zeros(16, dtype=complex)
    expected[0b0000] = expected[0b0111] = alpha * SQRT2_INV
    expected[0b1000] = expected[0b1111] = beta * SQRT2_INV
    assert np.allclose(s.amplitudes, expected, atol=1e-15)


def test_pauli_actions():
    zero = qsim.prepare_arbitrary(1, 0)
    assert np.allclose(qsim.apply_pauli(zero, "X", 0).amplitudes, [0, 1])
    s = qsim.prepare_arbitrary(0.6, 0.8)
    assert np.allclose(qsim.apply_pauli(s, "Z", 0).amplitudes, [0.6, -0.8])


def test_xz_undoes_table_row_four_residual():
    alpha, beta = 0.6, 0.8j
    residual = StateVector([-beta, alpha])  # alpha|1> - beta|0>
    restored = qsim.apply_pauli(residual, "XZ", 0)
    assert states_equal_up_to_phase(restored.amplitudes, [alpha, beta])


def test_pauli_bad_index():
    with pytest.raises(qsim.QubitIndexError):
        qsim.apply_pauli(qsim.prepare_plus(), "X", 1)
    with pytest.raises(qsim.QSimError):
        qsim.apply_pauli(qsim.prepare_plus(), "Y", 0)


def test_cphase():
    one_one = StateVector([0, 0, 0, 1])
    assert np.allclose(qsim.apply_cphase(one_one, 0, 1).amplitudes, [0, 0, 0, -1])
    pp = qsim.tensor(qsim.prepare_plus(), qsim.prepare_plus())
    assert np.allclose(qsim.apply_cphase(pp, 0, 1).amplitudes, [0.5, 0.5, 0.5, -0.5])


def test_cphase_involution(rng):
    s = random_state(rng, 3)
    twice = qsim.apply_cphase(qsim.apply_cphase(s, 0, 2), 2, 0)
    assert np.allclose(twice.amplitudes, s.amplitudes, atol=1e-14)


def test_cphase_same_qubit():
    with pytest.raises(qsim.InvalidPairError):
        qsim.apply_cphase(qsim.prepare_ghz(2), 1, 1)


def test_move_qubit():
    s = StateVector([0, 0, 0, 0, 1, 0, 0, 0])  # |100>
    assert np.argmax(np.abs(qsim.move_qubit(s, 0, 2).amplitudes)) == 0b001


def test_apply_frames_batch_matches_apply_pauli(rng):
    states = np.array([random_state(rng, 1).amplitudes for _ in range(4)])
    x = np.array([0, 0, 1, 1])
    z = np.array([0, 1, 0, 1])
    out = qsim.apply_frames_batch(states, x, z)
    for k, name in enumerate(["I", "Z", "X", "XZ"]):
        ref = qsim.apply_pauli(StateVector(states[k]), name, 0).amplitudes
        assert np.allclose(out[k], ref)


# -- measurement ------------------------------------------------------------


def test_bell_outcome_on_table_configuration():
    alpha, beta = 0.6, 0.8j
    joint = qsim.tensor(qsim.prepare_arbitrary(alpha, beta), qsim.prepare_ghz(3))
    p, residual = qsim.project_bell(joint, 0, 1, (0, 0))
    assert abs(p - 0.25) < 1e-12
    assert states_equal_up_to_phase(residual.amplitudes, [alpha, 0, 0, beta])
    p, residual = qsim.project_bell(joint, 0, 1, (1, 0))
    assert states_equal_up_to_phase(residual.amplitudes, [beta, 0, 0, alpha])


def test_bell_probabilities_match_brute_force_projectors(rng):
    alpha, beta = random_state(rng, 1).amplitudes
    joint = qsim.tensor(qsim.prepare_arbitrary(alpha, beta), qsim.prepare_ghz(3))
    probs = qsim.bell_probabilities(joint, 0, 1)
    for bits, vec in qsim.BELL_VECTORS.items():
        oracle = bell_projector_probability(joint, 0, 1, vec)
        assert abs(oracle - 0.25) < 1e-12
        assert abs(probs[bits] - oracle) < 1e-12


def test_measure_bell_removes_qubits(rng):
    outcome, residual = qsim.measure_bell(qsim.prepare_ghz(4), 1, 3, rng)
    assert outcome in qsim.BELL_OUTCOMES
    assert residual.num_qubits == 2


def test_measure_bell_needs_distinct_pair(rng):
    with pytest.raises(qsim.InvalidPairError):
        qsim.measure_bell(qsim.prepare_ghz(3), 1, 1, rng)
    with pytest.raises(qsim.InvalidSizeError):
        qsim.measure_bell(qsim.prepare_plus(), 0, 0, rng)


def test_measure_x_on_plus_is_deterministic(rng):
    for _ in range(20):
        outcome, _ = qsim.measure_x(qsim.prepare_plus(), 0, rng)
        assert outcome == 0


def test_project_x_on_two_qubit_residual():
    alpha, beta = 0.6, 0.8j
    s = StateVector([alpha, 0, 0, beta])
    p0, r0 = qsim.project_x(s, 0, 0)
    p1, r1 = qsim.project_x(s, 0, 1)
    # <+|_0 (a|00> + b|11>) = (a|0> + b|1>)/sqrt2 ; <-|_0 gives (a|0> - b|1>)/sqrt2
    assert abs(p0 - 0.5) < 1e-12 and abs(p1 - 0.5) < 1e-12
    assert states_equal_up_to_phase(r0.amplitudes, [alpha, beta])
    assert states_equal_up_to_phase(r1.amplitudes, [alpha, -beta])


def test_project_x_on_zero_is_even():
    zero = qsim.prepare_arbitrary(1, 0)
    assert abs(qsim.project_x(zero, 0, 0)[0] - 0.5) < 1e-12
    assert abs(qsim.project_x(zero, 0, 1)[0] - 0.5) < 1e-12


def test_measure_z_cases(rng):
    outcome, residual = qsim.measure_z(qsim.prepare_arbitrary(0, 1), 0, rng)
    assert outcome == 1 and residual.num_qubits == 0
    assert abs(qsim.project_z(qsim.prepare_plus(), 0, 0)[0] - 0.5) < 1e-12
    for b in (0, 1):
        p, rest = qsim.project_z(qsim.prepare_ghz(3), 0, b)
        expected = np.zeros(4)
        expected[3 * b] = 1
        assert abs(p - 0.5) < 1e-12
        assert states_equal_up_to_phase(rest.amplitudes, expected)


def test_measure_x_index_error(rng):
    with pytest.raises(qsim.QubitIndexError):
        qsim.measure_x(qsim.prepare_plus(), 2, rng)


def test_born_rule_frequencies():
    # p(1) = 0.64 for (0.6, 0.8); 1e5 seeded draws within 3 sigma
    rng = qsim.random_source(99)
    state = qsim.prepare_arbitrary(0.6, 0.8)
    trials = 100_000
    ones = sum(qsim.measure_z(state, 0, rng)[0] for _ in range(trials))
    sigma = sqrt(trials * 0.64 * 0.36)
    assert abs(ones - 0.64 * trials) < 3 * sigma


def test_same_seed_same_outcomes():
    a = qsim.random_source(5)
    b = qsim.random_source(5)
    state = qsim.prepare_ghz(4)
    seq_a = [qsim.measure_bell(state, 0, 2, a)[0] for _ in range(50)]
    seq_b = [qsim.measure_bell(state, 0, 2, b)[0] for _ in range(50)]
    assert seq_a == seq_b


# -- fidelity -----------------------------------------------------------------


def test_fidelity_examples():
    s = qsim.prepare_ghz(3)
    assert abs(qsim.fidelity_with_pure(s, [0, 1, 2], s) - 1) < 1e-12
    zero, one = qsim.prepare_arbitrary(1, 0), qsim.prepare_arbitrary(0, 1)
    assert qsim.fidelity_with_pure(zero, [0], one) == 0.0
    assert abs(qsim.fidelity_with_pure(qsim.prepare_ghz(2), [0], qsim.prepare_plus()) - 0.5) < 1e-12


def test_fidelity_matches_reduced_density_matrix(rng):
    s = random_state(rng, 4)
    target = random_state(rng, 2)
    rho = qsim.reduced_density_matrix(s, [3, 1])
    oracle = np.vdot(target.amplitudes, rho @ target.amplitudes).real
    assert abs(qsim.fidelity_with_pure(s, [3, 1], target) - oracle) < 1e-12


def test_fidelity_dimension_mismatch():
    with pytest.raises(qsim.DimensionMismatchError):
        qsim.fidelity_with_pure(qsim.prepare_ghz(3), [0], qsim.prepare_ghz(2))


# -- properties -----------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**32)


@settings(max_examples=50, deadline=None)
@given(seed=seeds, n=st.integers(2, 6))
def test_bell_completeness(seed, n):
    rng = qsim.random_source(seed)
    s = random_state(rng, n)
    q1, q2 = rng.choice(n, size=2, replace=False)
    total = sum(qsim.bell_probabilities(s, int(q1), int(q2)).values())
    assert abs(total - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=seeds, n=st.integers(2, 6))
def test_norm_preserved(seed, n):
    rng = qsim.random_source(seed)
    s = random_state(rng, n)
    q = int(rng.integers(n))
    for out in (qsim.apply_pauli(s, "XZ", q), qsim.apply_cphase(s, q, (q + 1) % n), qsim.measure_x(s, q, rng)[1]):
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=seeds, n=st.integers(2, 5))
def test_gates_are_unitary(seed, n):
    rng = qsim.random_source(seed)
    s = random_state(rng, n)
    q = int(rng.integers(n))
    for name in ("X", "Z", "XZ"):
        u = qsim.apply_pauli(s, name, q)
        back = qsim.apply_single(u, qsim.PAULI_MATRICES[name].conj().T, q)
        assert abs(back.overlap(s) - 1) < 1e-12
    back = qsim.apply_cphase(qsim.apply_cphase(s, q, (q + 1) % n), q, (q + 1) % n)
    assert abs(back.overlap(s) - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(seed=seeds)
def test_measurement_idempotence(seed):
    # a collapsed qubit re-measured gives the same outcome with certainty
    rng = qsim.random_source(seed)
    s = random_state(rng, 3)
    outcome, _ = qsim.measure_x(s, 1, rng)
    collapsed = qsim.apply_single(s, np.outer(qsim.X_BASIS[outcome], qsim.X_BASIS[outcome].conj()), 1)
    p, _ = qsim.project_x(collapsed, 1, outcome)
    assert abs(p - 1) < 1e-12
    again = qsim.apply_single(collapsed, np.outer(qsim.X_BASIS[outcome], qsim.X_BASIS[outcome].conj()), 1)
    assert abs(again.overlap(collapsed) - 1) < 1e-12
