"""Entanglement fidelity of single-qubit channels and the fidelity-sum bound.

A channel is a callable ``channel(state, q)`` that acts on qubit ``q`` of a
larger register and returns its exact unravelling: a list of
``(probability, StateVector)`` branches over the same register. Averaging
over branches is done exactly, never by sampling.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from itertools import product

import numpy as np

from . import qsim
from .butterfly import RoutingConfig, copy_labels
from .coding import OutcomeRecord, correction_for_terminal, encode_all
from .qsim import StateVector

Branches = list[tuple[float, StateVector]]
ChannelSimulator = Callable[[StateVector, int], Branches]

BOUND_CONSTANT = 2.8512
BOUND_TOL = 1e-12


class ChannelError(ValueError):
    pass


def _bell_pair() -> StateVector:
    return qsim.prepare_ghz(2)


def entanglement_fidelity(channel: ChannelSimulator) -> float:
    """<Phi+| (id x channel)(|Phi+><Phi+|) |Phi+>, qubit 0 as the reference."""
    pair = _bell_pair()
    branches = channel(pair, 1)
    total = sum(p for p, _ in branches)
    if abs(total - 1) > 1e-9:
        raise ChannelError(f"channel branch probabilities sum to {total!r}")
    fid = 0.0
    for p, out in branches:
        if out.num_qubits != 2:
            raise ChannelError(f"channel changed register size to {out.num_qubits}")
        fid += p * pair.overlap(out)
    return float(min(1.0, max(0.0, fid)))


def identity_channel(state: StateVector, q: int) -> Branches:
    return [(1.0, state)]


def measure_resend_channel(basis: str = "Z") -> ChannelSimulator:
    """Measure in a fixed basis and forward a fresh copy of the observed basis state."""
    if basis not in ("Z", "X"):
        raise ChannelError(f"unsupported basis {basis!r}")
    project = qsim.project_z if basis == "Z" else qsim.project_x
    fresh = qsim.Z_BASIS if basis == "Z" else qsim.X_BASIS

    def channel(state: StateVector, q: int) -> Branches:
        out = []
        for k in (0, 1):
            p, rest = project(state, q, k)
            if rest is None:
                continue
            resent = qsim.tensor(rest, StateVector(fresh[k]))
            out.append((p, qsim.move_qubit(resent, resent.num_qubits - 1, q)))
        return out

    return channel


def replacement_channel(state: StateVector, q: int) -> Branches:
    """Discard the qubit and output the maximally mixed state."""
    out = []
    for k in (0, 1):
        p, rest = qsim.project_z(state, q, k)
        if rest is None:
            continue
        for m in (0, 1):
            fresh = qsim.tensor(rest, StateVector(qsim.Z_BASIS[m]))
            out.append((p / 2, qsim.move_qubit(fresh, fresh.num_qubits - 1, q)))
    return out


def mixture(weight: float, first: ChannelSimulator, second: ChannelSimulator) -> ChannelSimulator:
    if not 0 <= weight <= 1:
        raise ChannelError("mixture weight must lie in [0, 1]")

    def channel(state: StateVector, q: int) -> Branches:
        return [(weight * p, s) for p, s in first(state, q)] + [((1 - weight) * p, s) for p, s in second(state, q)]

    return channel


def compose(*channels: ChannelSimulator) -> ChannelSimulator:
    """Apply channels left to right."""

    def channel(state: StateVector, q: int) -> Branches:
        branches = [(1.0, state)]
        for ch in channels:
            branches = [(p * p2, s2) for p, s in branches for p2, s2 in ch(s, q)]
        return branches

    return channel


def protocol_channel(
    n: int,
    terminal: int,
    chirality: str = "clockwise",
    *,
    resource: StateVector | None = None,
    seed: int = 0,
) -> ChannelSimulator:
    """The sender -> ``terminal`` path of a butterfly round as a one-qubit channel.

    The qubit handed to the channel plays the sender's input. Every outcome
    of that sender's copy is enumerated; the outcomes of the other copies
    only enter through the parity channels, so they are drawn once from
    ``seed``. ``resource`` replaces the GHZ copy (fault injection).
    """
    routing = RoutingConfig(n, chirality)
    sender = routing.held_copy(terminal)
    if resource is None:
        resource = qsim.prepare_ghz(n)
    if resource.num_qubits != n:
        raise ChannelError("resource must have n qubits")
    background = qsim.random_source(seed).integers(0, 2, size=(n, n))
    measurers = routing.x_measurers(sender)

    def channel(state: StateVector, q: int) -> Branches:
        width = state.num_qubits
        if width + n > qsim.MAX_QUBITS:
            raise ChannelError("register too large for the protocol channel")
        base = qsim.tensor(state, resource)
        host = [("host", k) for k in range(width)]
        labels0 = host + copy_labels(n, sender)[1:]
        sys_label = ("host", q)
        out = []
        for bits in product((0, 1), repeat=2 + len(measurers)):
            labels = list(labels0)
            p, s = qsim.project_bell(base, labels.index(sys_label), labels.index(("q", sender, sender)), bits[:2])
            if s is None:
                continue
            labels.remove(sys_label)
            labels.remove(("q", sender, sender))
            for (m, _), bit in zip(measurers, bits[2:]):
                p_x, s = qsim.project_x(s, labels.index(("q", m, sender)), bit)
                labels.remove(("q", m, sender))
                p *= p_x
                if s is None:
                    break
            if s is None:
                continue
            records = _records(routing, background, sender, bits)
            own = next(r for r in records if r.terminal == terminal)
            frame = correction_for_terminal(terminal, own, encode_all(records), routing)
            recv = labels.index(("q", terminal, sender))
            s = qsim.apply_pauli(s, frame.name, recv)
            out.append((p, qsim.move_qubit(s, recv, q)))
        return out

    return channel


def _records(routing: RoutingConfig, background: np.ndarray, sender: int, local_bits) -> list[OutcomeRecord]:
    n = routing.n
    a = {t: tuple(int(v) for v in background[t - 1, :2]) for t in routing.terminals}
    b = {t: [int(v) for v in background[t - 1, 2:n]] for t in routing.terminals}
    a[sender] = tuple(local_bits[:2])
    for (m, slot), bit in zip(routing.x_measurers(sender), local_bits[2:]):
        b[m][slot] = bit
    return [OutcomeRecord(t, a[t], tuple(b[t])) for t in routing.terminals]


@dataclass(frozen=True)
class BoundReport:
    d: int
    fidelities: tuple[float, ...]
    total: float
    threshold: float
    satisfied: bool


def bound_threshold(d: int) -> float:
    return BOUND_CONSTANT * d / (d + 1)


def check_bound(fidelities: Sequence[float], d: int) -> BoundReport:
    """Compare sum(f_i) against 2.8512 d / (d + 1)."""
    f = tuple(float(v) for v in fidelities)
    if len(f) != d:
        raise ValueError(f"expected {d} fidelities, got {len(f)}")
    if any(not -BOUND_TOL <= v <= 1 + BOUND_TOL for v in f):
        raise ValueError(f"fidelity outside [0, 1]: {f}")
    total = sum(f)
    threshold = bound_threshold(d)
    return BoundReport(d, f, total, threshold, total <= threshold + BOUND_TOL)


def baseline_channels(n: int) -> dict[int, ChannelSimulator]:
    """Entanglement-free path to each terminal: measure at the sender, resend via a relay."""
    if n < 3:
        raise ValueError("baseline needs n >= 3")
    hop = measure_resend_channel("Z")
    return {t: compose(hop, hop) for t in range(1, n + 1)}


def baseline_no_entanglement(n: int) -> BoundReport:
    fids = [entanglement_fidelity(ch) for _, ch in sorted(baseline_channels(n).items())]
    return check_bound(fids, n)


def protocol_bound_report(n: int, chirality: str = "clockwise") -> BoundReport:
    fids = [entanglement_fidelity(protocol_channel(n, t, chirality)) for t in range(1, n + 1)]
    return check_bound(fids, n)

