"""Dense statevector engine.

Qubit 0 is the most significant position of a basis label, so for three
qubits ``|100>`` sits at index 4. Measurements remove the measured qubits
from the register; callers that need stable names keep their own label list
and drop entries in step with the register.
"""
from __future__ import annotations

from collections.abc import Mapping, Sequence
from math import sqrt

import numpy as np

MAX_QUBITS = 24
ATOL = 1e-12

RandomSource = np.random.Generator

_SQRT2_INV = 1 / sqrt(2)

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# "XZ" is the operator product X·Z, i.e. Z acts first.
PAULI_MATRICES["XZ"] = PAULI_MATRICES["X"] @ PAULI_MATRICES["Z"]

# Bell outcome bits -> projector vector over (q1, q2). The residual states are
# what fixes this table: (0,0) leaves a|00>+b|11> on the rest of a GHZ state.
BELL_VECTORS = {
    (0, 0): np.array([1, 0, 0, 1], dtype=complex) * _SQRT2_INV,
    (0, 1): np.array([1, 0, 0, -1], dtype=complex) * _SQRT2_INV,
    (1, 0): np.array([0, 1, 1, 0], dtype=complex) * _SQRT2_INV,
    (1, 1): np.array([0, 1, -1, 0], dtype=complex) * _SQRT2_INV,
}
BELL_OUTCOMES = tuple(BELL_VECTORS)
CONVENTIONAL_BELL_LABELS = {(0, 0): "phi+", (0, 1): "phi-", (1, 0): "psi+", (1, 1): "psi-"}
# Labels printed next to the same rows of the reference truth table.
TABLE_BELL_LABELS = {(0, 0): "psi+", (0, 1): "psi-", (1, 0): "phi+", (1, 1): "phi-"}

X_BASIS = {
    0: np.array([1, 1], dtype=complex) * _SQRT2_INV,
    1: np.array([1, -1], dtype=complex) * _SQRT2_INV,
}
Z_BASIS = {
    0: np.array([1, 0], dtype=complex),
    1: np.array([0, 1], dtype=complex),
}


class QSimError(ValueError):
    """Base class for invalid simulator requests."""


class DegenerateStateError(QSimError):
    pass


class InvalidSizeError(QSimError):
    pass


class QubitIndexError(QSimError, IndexError):
    pass


class InvalidPairError(QSimError):
    pass


class DimensionMismatchError(QSimError):
    pass


class MeasurementError(RuntimeError):
    """Projection probabilities are numerically inconsistent."""


def random_source(seed: int) -> RandomSource:
    """Deterministic stream for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & (2**64 - 1)))


class StateVector:
    """Normalized amplitudes over ``num_qubits`` qubits (read-only array)."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, *, normalize: bool = False):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        size = amps.shape[0]
        if size < 1 or size & (size - 1):
            raise InvalidSizeError(f"amplitude count {size} is not a power of two")
        if size.bit_length() - 1 > MAX_QUBITS:
            raise InvalidSizeError(f"register exceeds the {MAX_QUBITS}-qubit cap")
        norm = np.linalg.norm(amps)
        if norm < ATOL:
            raise DegenerateStateError("state has zero norm")
        if normalize:
            amps = amps / norm
        elif abs(norm - 1) > 1e-9:
            raise DegenerateStateError(f"state norm {norm!r} is not 1")
        amps.setflags(write=False)
        self.amplitudes = amps

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.shape[0].bit_length() - 1

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape([2] * self.num_qubits) if self.num_qubits else self.amplitudes

    def overlap(self, other: StateVector) -> float:
        """Phase-insensitive overlap |<self|other>|^2."""
        if other.num_qubits != self.num_qubits:
            raise DimensionMismatchError("registers differ in size")
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)

    def __repr__(self) -> str:
        return f"StateVector(num_qubits={self.num_qubits})"


def _check_qubit(state: StateVector, q: int) -> None:
    if not 0 <= q < state.num_qubits:
        raise QubitIndexError(f"qubit {q} out of range for {state.num_qubits}-qubit register")


def _from_tensor(psi: np.ndarray) -> StateVector:
    return StateVector(psi.reshape(-1), normalize=True)


def prepare_arbitrary(alpha: complex, beta: complex) -> StateVector:
    if abs(alpha) < ATOL and abs(beta) < ATOL:
        raise DegenerateStateError("alpha and beta are both zero")
    return StateVector([alpha, beta], normalize=True)


def prepare_plus() -> StateVector:
    return StateVector(X_BASIS[0])


def prepare_ghz(n: int) -> StateVector:
    if n < 2:
        raise InvalidSizeError(f"GHZ state needs at least 2 qubits, got {n}")
    if n > MAX_QUBITS:
        raise InvalidSizeError(f"register exceeds the {MAX_QUBITS}-qubit cap")
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = _SQRT2_INV
    return StateVector(amps)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    if a.num_qubits + b.num_qubits > MAX_QUBITS:
        raise InvalidSizeError(f"register exceeds the {MAX_QUBITS}-qubit cap")
    return StateVector(np.kron(a.amplitudes, b.amplitudes), normalize=True)


def tensor_all(states: Sequence[StateVector]) -> StateVector:
    out = states[0]
    for s in states[1:]:
        out = tensor(out, s)
    return out


def apply_single(state: StateVector, matrix: np.ndarray, qubit: int) -> StateVector:
    _check_qubit(state, qubit)
    psi = np.moveaxis(state.tensor_view(), qubit, 0)
    psi = np.tensordot(matrix, psi, axes=([1], [0]))
    return _from_tensor(np.moveaxis(psi, 0, qubit))


def apply_pauli(state: StateVector, which: str, qubit: int) -> StateVector:
    try:
        matrix = PAULI_MATRICES[which]
    except KeyError:
        raise QSimError(f"unknown Pauli {which!r}") from None
    return apply_single(state, matrix, qubit)


def apply_cphase(state: StateVector, i: int, j: int) -> StateVector:
    _check_qubit(state, i)
    _check_qubit(state, j)
    if i == j:
        raise InvalidPairError("CPHASE needs two distinct qubits")
    psi = np.array(state.tensor_view())
    idx = [slice(None)] * state.num_qubits
    idx[i] = idx[j] = 1
    psi[tuple(idx)] *= -1
    return _from_tensor(psi)


def move_qubit(state: StateVector, src: int, dst: int) -> StateVector:
    """Reorder the register so qubit ``src`` ends up at position ``dst``."""
    _check_qubit(state, src)
    _check_qubit(state, dst)
    return _from_tensor(np.moveaxis(state.tensor_view(), src, dst))


def _amplitudes_given(state: StateVector, qubits: Sequence[int], vector: np.ndarray) -> np.ndarray:
    """Unnormalized rest-of-register amplitudes after projecting ``qubits`` onto ``vector``."""
    n = state.num_qubits
    psi = np.moveaxis(state.tensor_view(), list(qubits), list(range(len(qubits))))
    psi = psi.reshape(2 ** len(qubits), 2 ** (n - len(qubits)))
    return np.conj(vector) @ psi


def _project(state: StateVector, qubits: Sequence[int], vector: np.ndarray) -> tuple[float, StateVector | None]:
    rest = _amplitudes_given(state, qubits, vector)
    prob = float(np.vdot(rest, rest).real)
    if prob < ATOL:
        return 0.0, None
    return prob, StateVector(rest / sqrt(prob))


def bell_probabilities(state: StateVector, q1: int, q2: int) -> dict[tuple[int, int], float]:
    _check_pair(state, q1, q2)
    out = {}
    for bits, vec in BELL_VECTORS.items():
        rest = _amplitudes_given(state, (q1, q2), vec)
        out[bits] = float(np.vdot(rest, rest).real)
    return out


def _check_pair(state: StateVector, q1: int, q2: int) -> None:
    if state.num_qubits < 2:
        raise InvalidSizeError("Bell measurement needs at least two qubits")
    _check_qubit(state, q1)
    _check_qubit(state, q2)
    if q1 == q2:
        raise InvalidPairError("Bell measurement needs two distinct qubits")


def project_bell(state: StateVector, q1: int, q2: int, outcome: tuple[int, int]) -> tuple[float, StateVector | None]:
    """Post-select a Bell outcome. Returns (probability, residual or None if impossible)."""
    _check_pair(state, q1, q2)
    return _project(state, (q1, q2), BELL_VECTORS[tuple(outcome)])


def project_x(state: StateVector, q: int, outcome: int) -> tuple[float, StateVector | None]:
    _check_qubit(state, q)
    return _project(state, (q,), X_BASIS[outcome])


def project_z(state: StateVector, q: int, outcome: int) -> tuple[float, StateVector | None]:
    _check_qubit(state, q)
    return _project(state, (q,), Z_BASIS[outcome])


def _sample(probs: Mapping, rng: RandomSource):
    total = sum(probs.values())
    if abs(total - 1) > 1e-9:
        raise MeasurementError(f"outcome probabilities sum to {total!r}")
    r = rng.random() * total
    acc = 0.0
    last = None
    for key, p in probs.items():
        if p <= 0:
            continue
        acc += p
        last = key
        if r < acc:
            return key
    return last


def measure_bell(state: StateVector, q1: int, q2: int, rng: RandomSource):
    probs = bell_probabilities(state, q1, q2)
    outcome = _sample(probs, rng)
    _, residual = project_bell(state, q1, q2, outcome)
    return outcome, residual


def _measure_single(state, q, rng, project):
    _check_qubit(state, q)
    results = {k: project(state, q, k) for k in (0, 1)}
    outcome = _sample({k: p for k, (p, _) in results.items()}, rng)
    return outcome, results[outcome][1]


def measure_x(state: StateVector, q: int, rng: RandomSource) -> tuple[int, StateVector]:
    return _measure_single(state, q, rng, project_x)


def measure_z(state: StateVector, q: int, rng: RandomSource) -> tuple[int, StateVector]:
    return _measure_single(state, q, rng, project_z)


def reduced_density_matrix(state: StateVector, kept_qubits: Sequence[int]) -> np.ndarray:
    kept = list(kept_qubits)
    for q in kept:
        _check_qubit(state, q)
    if len(set(kept)) != len(kept):
        raise InvalidPairError("kept qubits must be distinct")
    n = state.num_qubits
    psi = np.moveaxis(state.tensor_view(), kept, list(range(len(kept))))
    m = psi.reshape(2 ** len(kept), 2 ** (n - len(kept)))
    return m @ m.conj().T


def fidelity_with_pure(state: StateVector, kept_qubits: Sequence[int], target: StateVector) -> float:
    """<target| rho_kept |target> for the reduced state on ``kept_qubits``."""
    kept = list(kept_qubits)
    if len(kept) != target.num_qubits:
        raise DimensionMismatchError(
            f"{len(kept)} kept qubits vs {target.num_qubits}-qubit target"
        )
    for q in kept:
        _check_qubit(state, q)
    n = state.num_qubits
    psi = np.moveaxis(state.tensor_view(), kept, list(range(len(kept))))
    m = psi.reshape(2 ** len(kept), 2 ** (n - len(kept)))
    v = np.conj(target.amplitudes) @ m
    return float(min(1.0, max(0.0, np.vdot(v, v).real)))


def expectation(state: StateVector, paulis: Mapping[int, str]) -> float:
    """Expectation value of a tensor product of Paulis given as {qubit: 'X'|'Z'|...}."""
    out = state
    for q, p in paulis.items():
        out = apply_pauli(out, p, q)
    return float(np.vdot(state.amplitudes, out.amplitudes).real)


def apply_frames_batch(states: np.ndarray, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Apply X^x Z^z to a stack of single-qubit states of shape (..., 2)."""
    out = np.array(states, dtype=complex)
    out[..., 1] = np.where(z, -out[..., 1], out[..., 1])
    swapped = out[..., ::-1]
    return np.where(np.asarray(x)[..., None].astype(bool), swapped, out)
