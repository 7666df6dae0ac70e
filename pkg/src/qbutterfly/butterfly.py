"""One protocol round on an n-terminal butterfly network sharing n GHZ copies.

Terminal t owns the input state psi_t and one qubit of every GHZ copy. It
Bell-measures (psi_t, its qubit of copy t), X-measures its qubits of every
copy except copy t and the copy it keeps, and finally corrects the kept qubit
using the parity channels. Terminals and copies are numbered from 1.

GHZ copies never interact, so by default each copy is simulated in its own
(n + 1)-qubit register; ``composite=True`` runs the whole n^2 + n register as a
cross-check where it fits under the qubit cap.
"""
from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from . import qsim
from .coding import (
    OutcomeRecord,
    ParityMessage,
    PauliFrame,
    correction_for_terminal,
    encode_all,
    residual_frame,
)
from .qsim import StateVector

CLOCKWISE = "clockwise"
COUNTERCLOCKWISE = "counterclockwise"
DEFAULT_BRANCH_BUDGET = 2**16
ABSTRACT_BITS_PER_CHANNEL = 2


class RoutingError(ValueError):
    pass


class EnumerationBudgetError(RuntimeError):
    def __init__(self, message: str, partial: "BranchSet | None" = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class RoutingConfig:
    """Which copy each terminal keeps and which it X-measures.

    Clockwise, terminal t keeps copy t - 1, so sender i reaches terminal
    i + 1 (at n = 3, terminal 1 receives psi_3). ``b_assignment`` maps each
    terminal to the sorted tuple of copies it X-measures.
    """

    n: int
    chirality: str = CLOCKWISE
    b_assignment: Mapping[int, tuple[int, ...]] = field(default=None)

    def __post_init__(self):
        if self.chirality not in (CLOCKWISE, COUNTERCLOCKWISE):
            raise RoutingError(f"unknown chirality {self.chirality!r}")
        if self.b_assignment is None:
            default = {t: tuple(sorted(set(self.terminals) - {t, self._kept(t)})) for t in self.terminals}
            object.__setattr__(self, "b_assignment", default)
        self.validate()

    @property
    def terminals(self) -> range:
        return range(1, self.n + 1)

    def _wrap(self, k: int) -> int:
        return (k - 1) % self.n + 1

    def _kept(self, t: int) -> int:
        return self._wrap(t - 1 if self.chirality == CLOCKWISE else t + 1)

    def held_copy(self, t: int) -> int:
        (kept,) = set(self.terminals) - {t} - set(self.b_assignment[t])
        return kept

    def receiver(self, copy: int) -> int:
        for t in self.terminals:
            if self.held_copy(t) == copy:
                return t
        raise RoutingError(f"copy {copy} has no receiver")

    def x_measurers(self, copy: int) -> list[tuple[int, int]]:
        """(terminal, slot in that terminal's X bits) for every X measurement on ``copy``."""
        return [(t, self.b_assignment[t].index(copy)) for t in self.terminals if copy in self.b_assignment[t]]

    def receiver_map(self) -> dict[int, int]:
        """sender -> receiving terminal"""
        return {i: self.receiver(i) for i in self.terminals}

    def validate(self) -> None:
        if self.n < 3:
            raise RoutingError("routing needs at least 3 terminals")
        if set(self.b_assignment) != set(self.terminals):
            raise RoutingError("b_assignment must cover every terminal")
        for t, copies in self.b_assignment.items():
            if t in copies or len(copies) != self.n - 2 or not set(copies) <= set(self.terminals):
                raise RoutingError(f"terminal {t} must X-measure n-2 copies other than its own")
        kept = [self.held_copy(t) for t in self.terminals]
        if sorted(kept) != list(self.terminals):
            raise RoutingError("kept copies must form a derangement of the senders")
        if any(kept[t - 1] != self._kept(t) for t in self.terminals):
            raise RoutingError(f"kept copies disagree with {self.chirality} cyclicity")

    def flipped(self) -> RoutingConfig:
        other = COUNTERCLOCKWISE if self.chirality == CLOCKWISE else CLOCKWISE
        return RoutingConfig(self.n, other)


def copy_labels(n: int, copy: int) -> list[tuple]:
    return [("in", copy)] + [("q", t, copy) for t in range(1, n + 1)]


@dataclass(frozen=True)
class ButterflyInstance:
    n: int
    inputs: tuple[tuple[complex, complex], ...]
    ghz_copies: tuple[StateVector, ...]

    @property
    def num_qubits(self) -> int:
        return self.n * self.n + self.n

    @property
    def positions(self) -> dict[tuple, int]:
        """Label -> index in the composite register (copies laid out in order)."""
        labels = [lab for i in range(1, self.n + 1) for lab in copy_labels(self.n, i)]
        return {lab: k for k, lab in enumerate(labels)}

    def input_state(self, j: int) -> StateVector:
        return qsim.prepare_arbitrary(*self.inputs[j - 1])

    def copy_register(self, i: int) -> StateVector:
        return qsim.tensor(self.input_state(i), self.ghz_copies[i - 1])

    def with_resource(self, copy: int, resource: StateVector) -> ButterflyInstance:
        """Replace GHZ copy ``copy`` (fault injection)."""
        if resource.num_qubits != self.n:
            raise qsim.DimensionMismatchError("resource must have n qubits")
        copies = list(self.ghz_copies)
        copies[copy - 1] = resource
        return replace(self, ghz_copies=tuple(copies))


def build_instance(n: int, inputs: Sequence[tuple[complex, complex]]) -> ButterflyInstance:
    if n < 3:
        raise RoutingError(f"butterfly round needs n >= 3, got {n}")
    if len(inputs) != n:
        raise RoutingError(f"expected {n} inputs, got {len(inputs)}")
    normalized = []
    for alpha, beta in inputs:
        amps = qsim.prepare_arbitrary(alpha, beta).amplitudes
        normalized.append((complex(amps[0]), complex(amps[1])))
    ghz = qsim.prepare_ghz(n)
    return ButterflyInstance(n, tuple(normalized), tuple(ghz for _ in range(n)))


def random_inputs(n: int, rng: qsim.RandomSource) -> list[tuple[complex, complex]]:
    """Haar-random single-qubit states."""
    out = []
    for _ in range(n):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        v /= np.linalg.norm(v)
        out.append((complex(v[0]), complex(v[1])))
    return out


@dataclass(frozen=True)
class Forced:
    """Post-selected outcomes: Bell bits and X bits per terminal."""

    a: Mapping[int, tuple[int, int]]
    b: Mapping[int, tuple[int, ...]]

    @classmethod
    def zeros(cls, n: int) -> Forced:
        return cls({t: (0, 0) for t in range(1, n + 1)}, {t: (0,) * (n - 2) for t in range(1, n + 1)})

    @classmethod
    def from_bits(cls, n: int, bits: Sequence[int]) -> Forced:
        """Unpack a flat bit list laid out terminal by terminal as a1 a0 b..."""
        width = n
        a, b = {}, {}
        for t in range(1, n + 1):
            chunk = tuple(int(v) for v in bits[(t - 1) * width : t * width])
            a[t], b[t] = chunk[:2], chunk[2:]
        return cls(a, b)


@dataclass(frozen=True)
class ProtocolTranscript:
    n: int
    chirality: str
    inputs: tuple[tuple[complex, complex], ...]
    outcomes: tuple[OutcomeRecord, ...]
    messages: tuple[ParityMessage, ...]
    corrections: Mapping[int, PauliFrame]
    final_fidelities: Mapping[int, float]
    received: Mapping[int, int]
    probability: float = 1.0
    relabel_log: tuple[str, ...] = ()

    def to_text(self) -> str:
        return format_transcript(self)


MessageFault = Callable[[list[ParityMessage]], list[ParityMessage]]


def flip_message_bit(channel: str, position: int) -> MessageFault:
    """Fault injector flipping bit ``position`` (0 = a1, 1 = a0, 2.. = b) on ``channel``."""

    def fault(messages):
        out = []
        for m in messages:
            if m.channel == channel:
                bits = [*m.a_parity, *m.b_parity]
                bits[position] = bits[position] ^ 1
                m = ParityMessage(m.channel, tuple(bits[:2]), tuple(bits[2:]))
            out.append(m)
        return out

    return fault


class _Registers:
    """Registers plus label bookkeeping, either one per copy or one composite."""

    def __init__(self, instance: ButterflyInstance, composite: bool):
        n = instance.n
        self.log: list[str] = []
        if composite:
            self.states = [qsim.tensor_all([instance.copy_register(i) for i in range(1, n + 1)])]
            self.labels = [[lab for i in range(1, n + 1) for lab in copy_labels(n, i)]]
            self.home = {i: 0 for i in range(1, n + 1)}
        else:
            self.states = [instance.copy_register(i) for i in range(1, n + 1)]
            self.labels = [copy_labels(n, i) for i in range(1, n + 1)]
            self.home = {i: i - 1 for i in range(1, n + 1)}

    def locate(self, label: tuple) -> tuple[int, int]:
        r = self.home[label[-1]]
        return r, self.labels[r].index(label)

    def drop(self, r: int, labels: Sequence[tuple], event: str) -> None:
        for lab in labels:
            self.labels[r].remove(lab)
        self.log.append(f"{event}: removed {' '.join(_fmt_label(lab) for lab in labels)}")


def _fmt_label(label: tuple) -> str:
    if label[0] == "in":
        return f"in{label[1]}"
    return f"q{label[1]}.{label[2]}"


def _measure_bell(regs: _Registers, t: int, rng, forced: Forced | None) -> tuple[tuple[int, int], float]:
    r, q1 = regs.locate(("in", t))
    _, q2 = regs.locate(("q", t, t))
    state = regs.states[r]
    if forced is None:
        outcome, residual = qsim.measure_bell(state, q1, q2, rng)
        prob = qsim.bell_probabilities(state, q1, q2)[outcome]
    else:
        outcome = tuple(forced.a[t])
        prob, residual = qsim.project_bell(state, q1, q2, outcome)
        if residual is None:
            raise ZeroProbabilityBranch(f"Bell outcome {outcome} at terminal {t} has probability 0")
    regs.states[r] = residual
    regs.drop(r, [("in", t), ("q", t, t)], f"bell t={t}")
    return outcome, prob


def _measure_x(regs: _Registers, t: int, copy: int, slot: int, rng, forced: Forced | None) -> tuple[int, float]:
    r, q = regs.locate(("q", t, copy))
    state = regs.states[r]
    if forced is None:
        outcome, residual = qsim.measure_x(state, q, rng)
        prob = qsim.project_x(state, q, outcome)[0]
    else:
        outcome = int(forced.b[t][slot])
        prob, residual = qsim.project_x(state, q, outcome)
        if residual is None:
            raise ZeroProbabilityBranch(f"X outcome {outcome} at terminal {t} has probability 0")
    regs.states[r] = residual
    regs.drop(r, [("q", t, copy)], f"x t={t} copy={copy}")
    return outcome, prob


class ZeroProbabilityBranch(RuntimeError):
    pass


def run_round(
    instance: ButterflyInstance,
    routing: RoutingConfig,
    rng: qsim.RandomSource | None = None,
    *,
    forced: Forced | None = None,
    composite: bool = False,
    message_fault: MessageFault | None = None,
) -> ProtocolTranscript:
    """Execute one round, sampling outcomes from ``rng`` or post-selecting ``forced``."""
    n = instance.n
    if routing.n != n:
        raise RoutingError(f"routing is for n={routing.n}, instance has n={n}")
    if forced is None and rng is None:
        raise ValueError("either rng or forced outcomes are required")
    regs = _Registers(instance, composite)
    prob = 1.0

    # all Bell measurements, then all X measurements, terminal order
    a_bits = {}
    for t in routing.terminals:
        a_bits[t], p = _measure_bell(regs, t, rng, forced)
        prob *= p
    b_bits = {}
    for t in routing.terminals:
        bits = []
        for slot, copy in enumerate(routing.b_assignment[t]):
            bit, p = _measure_x(regs, t, copy, slot, rng, forced)
            bits.append(bit)
            prob *= p
        b_bits[t] = tuple(bits)

    records = tuple(OutcomeRecord(t, a_bits[t], b_bits[t]) for t in routing.terminals)
    messages = encode_all(records)
    if message_fault is not None:
        messages = message_fault(messages)

    corrections, fidelities, received = {}, {}, {}
    for rec in records:
        t = rec.terminal
        sender = routing.held_copy(t)
        total = correction_for_terminal(t, rec, messages, routing)
        r, q = regs.locate(("q", t, sender))
        state = qsim.apply_pauli(regs.states[r], rec.own_frame().name, q)
        state = qsim.apply_pauli(state, residual_frame(rec, total).name, q)
        regs.states[r] = state
        corrections[t] = total
        received[t] = sender
        fidelities[t] = qsim.fidelity_with_pure(state, [q], instance.input_state(sender))

    return ProtocolTranscript(
        n=n,
        chirality=routing.chirality,
        inputs=instance.inputs,
        outcomes=records,
        messages=tuple(messages),
        corrections=corrections,
        final_fidelities=fidelities,
        received=received,
        probability=prob,
        relabel_log=tuple(regs.log),
    )


def classical_cost(transcript: ProtocolTranscript) -> dict[str, int]:
    """Bits sent on each parity channel."""
    return {m.channel: m.num_bits for m in transcript.messages}


def cost_summary(transcript: ProtocolTranscript) -> dict[str, object]:
    cost = classical_cost(transcript)
    widths = set(cost.values())
    return {
        "channels": len(cost),
        "bits_per_channel": widths.pop() if len(widths) == 1 else sorted(widths),
        "total_bits": sum(cost.values()),
        "abstract_bits_per_channel": ABSTRACT_BITS_PER_CHANNEL,
        "matches_abstract": all(v == ABSTRACT_BITS_PER_CHANNEL for v in cost.values()),
    }


# -- exhaustive enumeration ------------------------------------------------


def _local_table(instance: ButterflyInstance, routing: RoutingConfig, copy: int):
    """Post-selected residual of one copy for every local outcome combination.

    Local bits are the sender's Bell pair followed by the X bits of this
    copy's measurers in terminal order. Returns (probabilities, residuals)
    indexed by the local bits read as a big-endian integer.
    """
    n = instance.n
    measurers = routing.x_measurers(copy)
    size = 2 ** (2 + len(measurers))
    probs = np.zeros(size)
    residuals = np.zeros((size, 2), dtype=complex)
    base = instance.copy_register(copy)
    labels0 = copy_labels(n, copy)
    for k, bits in enumerate(product((0, 1), repeat=2 + len(measurers))):
        labels = list(labels0)
        p, state = qsim.project_bell(base, labels.index(("in", copy)), labels.index(("q", copy, copy)), bits[:2])
        labels.remove(("in", copy))
        labels.remove(("q", copy, copy))
        for (t, _), bit in zip(measurers, bits[2:]):
            if state is None:
                break
            q = labels.index(("q", t, copy))
            p_x, state = qsim.project_x(state, q, bit)
            p *= p_x
            labels.remove(("q", t, copy))
        if state is None:
            continue
        probs[k] = p
        residuals[k] = state.amplitudes
    return probs, residuals


@dataclass
class BranchSet:
    """Every outcome branch of a round, stored column-wise.

    ``bits[k]`` is the flat outcome list of branch k (terminal by terminal,
    a1 a0 then X bits). Indexing yields a :class:`ProtocolTranscript`.
    """

    instance: ButterflyInstance
    routing: RoutingConfig
    bits: np.ndarray
    probabilities: np.ndarray
    raw_states: np.ndarray  # (branches, n, 2): held qubit before any correction
    final_states: np.ndarray
    corr_x: np.ndarray
    corr_z: np.ndarray
    fidelities: np.ndarray  # (branches, n), column t-1 for terminal t
    messages: list[ParityMessage]
    partial: bool = False

    def __len__(self) -> int:
        return self.bits.shape[0]

    def __getitem__(self, k: int) -> ProtocolTranscript:
        n = self.instance.n
        forced = Forced.from_bits(n, self.bits[k])
        records = tuple(OutcomeRecord(t, forced.a[t], forced.b[t]) for t in self.routing.terminals)
        msgs = tuple(
            ParityMessage(m.channel, tuple(int(v[k]) for v in m.a_parity), tuple(int(v[k]) for v in m.b_parity))
            for m in self.messages
        )
        return ProtocolTranscript(
            n=n,
            chirality=self.routing.chirality,
            inputs=self.instance.inputs,
            outcomes=records,
            messages=msgs,
            corrections={t: PauliFrame(int(self.corr_x[k, t - 1]), int(self.corr_z[k, t - 1])) for t in self.routing.terminals},
            final_fidelities={t: float(self.fidelities[k, t - 1]) for t in self.routing.terminals},
            received={t: self.routing.held_copy(t) for t in self.routing.terminals},
            probability=float(self.probabilities[k]),
        )

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def min_fidelity(self) -> float:
        return float(self.fidelities.min())

    def averaged_raw_density(self, t: int) -> np.ndarray:
        """Probability-weighted density matrix of terminal t's qubit before correction."""
        psi = self.raw_states[:, t - 1, :]
        w = self.probabilities / self.probabilities.sum()
        return np.einsum("k,ki,kj->ij", w, psi, psi.conj())


def enumerate_branches(
    instance: ButterflyInstance,
    routing: RoutingConfig,
    *,
    budget: int = DEFAULT_BRANCH_BUDGET,
    allow_partial: bool = False,
    message_fault: MessageFault | None = None,
) -> BranchSet:
    """Post-select every outcome combination (2^(n^2) branches).

    Past ``budget`` branches this raises :class:`EnumerationBudgetError`
    carrying a partial set, or returns that partial set (``partial=True``)
    when ``allow_partial`` is given.
    """
    n = instance.n
    width = n * n
    total = 2**width
    count = min(total, budget)
    idx = np.arange(count, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(width - 1, -1, -1)) & 1).astype(np.int64)
    a = {t: (bits[:, (t - 1) * n], bits[:, (t - 1) * n + 1]) for t in routing.terminals}
    b = {t: tuple(bits[:, (t - 1) * n + 2 + s] for s in range(n - 2)) for t in routing.terminals}

    # residual of each copy, looked up from its local outcome bits
    probs = np.ones(count)
    raw = np.zeros((count, n, 2), dtype=complex)
    for copy in routing.terminals:
        lp, lres = _local_table(instance, routing, copy)
        local_bits = [a[copy][0], a[copy][1]] + [b[t][slot] for t, slot in routing.x_measurers(copy)]
        local_idx = np.zeros(count, dtype=np.int64)
        for col in local_bits:
            local_idx = (local_idx << 1) | col
        probs *= lp[local_idx]
        raw[:, routing.receiver(copy) - 1, :] = lres[local_idx]

    records = [OutcomeRecord(t, a[t], b[t]) for t in routing.terminals]
    messages = encode_all(records)
    if message_fault is not None:
        messages = message_fault(messages)

    corr_x = np.zeros((count, n), dtype=np.int64)
    corr_z = np.zeros((count, n), dtype=np.int64)
    final = np.zeros_like(raw)
    fid = np.zeros((count, n))
    for rec in records:
        t = rec.terminal
        total_frame = correction_for_terminal(t, rec, messages, routing)
        own = rec.own_frame()
        second = residual_frame(rec, total_frame)
        state = qsim.apply_frames_batch(raw[:, t - 1, :], own.x, own.z)
        state = qsim.apply_frames_batch(state, second.x, second.z)
        target = instance.input_state(routing.held_copy(t)).amplitudes
        final[:, t - 1, :] = state
        fid[:, t - 1] = np.clip(np.abs(state @ target.conj()) ** 2, 0.0, 1.0)
        corr_x[:, t - 1] = np.broadcast_to(total_frame.x, (count,))
        corr_z[:, t - 1] = np.broadcast_to(total_frame.z, (count,))

    result = BranchSet(
        instance=instance,
        routing=routing,
        bits=bits,
        probabilities=probs,
        raw_states=raw,
        final_states=final,
        corr_x=corr_x,
        corr_z=corr_z,
        fidelities=fid,
        messages=messages,
        partial=count < total,
    )
    if count < total and not allow_partial:
        raise EnumerationBudgetError(f"{total} branches exceed the budget of {budget}", partial=result)
    return result


# -- transcript text format ---------------------------------------------------


def _fmt_float(x: float) -> str:
    return f"{x:.12f}"


def format_transcript(tr: ProtocolTranscript) -> str:
    lines = [f"TRANSCRIPT n={tr.n} chirality={tr.chirality} probability={_fmt_float(tr.probability)}", "INPUTS"]
    for j, (alpha, beta) in enumerate(tr.inputs, start=1):
        vals = (alpha.real, alpha.imag, beta.real, beta.imag)
        lines.append(f"{j} " + " ".join(_fmt_float(v) for v in vals))
    lines.append("OUTCOMES")
    for rec in tr.outcomes:
        lines.append(" ".join(str(int(v)) for v in (rec.terminal, *rec.a, *rec.b)))
    lines.append("MESSAGES")
    lines.extend(m.to_line() for m in tr.messages)
    lines.append("CORRECTIONS")
    for t in sorted(tr.corrections):
        f = tr.corrections[t]
        lines.append(f"{t} {int(f.x)} {int(f.z)} from={tr.received[t]}")
    lines.append("FIDELITIES")
    for t in sorted(tr.final_fidelities):
        lines.append(f"{t} {_fmt_float(tr.final_fidelities[t])}")
    return "\n".join(lines) + "\n"


# -- single-copy truth table --------------------------------------------------

# (Bell bits, X bit) -> correction, with the two-qubit residual left by the
# Bell measurement written as coefficients of (|00>, |11>) in terms of (a, b).
TABLE1 = {
    ((0, 0), 0): "I", ((0, 0), 1): "Z",
    ((0, 1), 0): "Z", ((0, 1), 1): "I",
    ((1, 0), 0): "X", ((1, 0), 1): "XZ",
    ((1, 1), 0): "XZ", ((1, 1), 1): "X",
}


def table1_residual(a: tuple[int, int], alpha: complex, beta: complex) -> StateVector:
    """Residual after Bell outcome ``a`` on (alpha|0> + beta|1>) x GHZ_3."""
    c00, c11 = {
        (0, 0): (alpha, beta),
        (0, 1): (alpha, -beta),
        (1, 0): (beta, alpha),
        (1, 1): (-beta, alpha),
    }[a]
    return StateVector([c00, 0, 0, c11], normalize=True)


@dataclass(frozen=True)
class Table1Check:
    a: tuple[int, int]
    b: int
    correction: str
    bell_probability: float
    residual_fidelity: float
    restored_fidelity: float


def check_table1(alpha: complex, beta: complex) -> list[Table1Check]:
    """Simulate every row: Bell-measure input and one GHZ qubit, X-measure one more, correct."""
    psi = qsim.prepare_arbitrary(alpha, beta)
    joint = qsim.tensor(psi, qsim.prepare_ghz(3))
    rows = []
    for (a, b), name in TABLE1.items():
        p_bell, residual = qsim.project_bell(joint, 0, 1, a)
        res_fid = residual.overlap(table1_residual(a, *psi.amplitudes))
        _, single = qsim.project_x(residual, 0, b)
        restored = qsim.apply_pauli(single, name, 0)
        rows.append(Table1Check(a, b, name, p_bell, res_fid, restored.overlap(psi)))
    return rows
