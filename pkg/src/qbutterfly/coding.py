"""Outcome records, Pauli frames and the XOR parity channels E / E_j.

Every bit field accepts either a Python int or an integer numpy array. With
arrays, one call processes a whole batch of measurement branches; ``^``
broadcasts identically in both cases so there is a single code path.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import reduce
from operator import xor

import numpy as np

from .qsim import PAULI_MATRICES


class CodingError(ValueError):
    pass


class MissingChannelError(CodingError, KeyError):
    pass


def _check_bits(*values) -> None:
    for v in values:
        arr = np.asarray(v)
        if not np.all((arr == 0) | (arr == 1)):
            raise CodingError(f"bit value out of range: {v!r}")


def xor_all(values: Iterable):
    return reduce(xor, values, 0)


@dataclass(frozen=True)
class PauliFrame:
    """Pending correction X^x Z^z (Z applied first)."""

    x: int = 0
    z: int = 0

    def __post_init__(self):
        _check_bits(self.x, self.z)

    @property
    def name(self) -> str:
        return {(0, 0): "I", (0, 1): "Z", (1, 0): "X", (1, 1): "XZ"}[(int(self.x), int(self.z))]

    def matrix(self) -> np.ndarray:
        return PAULI_MATRICES[self.name]

    def __matmul__(self, other: PauliFrame) -> PauliFrame:
        return compose_frames(self, other)


IDENTITY = PauliFrame(0, 0)


def compose_frames(f: PauliFrame, g: PauliFrame) -> PauliFrame:
    """U(f) U(g)^-1 up to a global phase: bitwise XOR of the frames."""
    return PauliFrame(f.x ^ g.x, f.z ^ g.z)


def outcome_to_frame(a: tuple[int, int], b: int) -> PauliFrame:
    """Correction for a Bell outcome ``a`` followed by an X-basis outcome ``b``.

    The Bell bit pair contributes (x, z) = (a[0], a[1]); a ``|->`` result on
    the X measurement adds one more Z.
    """
    _check_bits(a[0], a[1], b)
    return PauliFrame(a[0], a[1] ^ b)


@dataclass(frozen=True)
class OutcomeRecord:
    """Measurement results of one terminal: Bell bits ``a`` and X bits ``b``.

    ``b`` holds one bit per X-measured copy, ordered by copy index.
    """

    terminal: int
    a: tuple
    b: tuple = ()

    def __post_init__(self):
        if len(self.a) != 2:
            raise CodingError("Bell outcome needs exactly two bits")
        _check_bits(*self.a, *self.b)

    def own_frame(self) -> PauliFrame:
        return outcome_to_frame(self.a, xor_all(self.b))


@dataclass(frozen=True)
class ParityMessage:
    channel: str
    a_parity: tuple
    b_parity: tuple = ()

    @property
    def num_bits(self) -> int:
        return 2 + len(self.b_parity)

    def to_line(self) -> str:
        bits = [*self.a_parity, *self.b_parity]
        return " ".join([self.channel, *(str(int(v)) for v in bits)])

    @classmethod
    def from_line(cls, line: str) -> ParityMessage:
        fields = line.split()
        if len(fields) < 3:
            raise CodingError(f"malformed channel line: {line!r}")
        bits = tuple(int(v) for v in fields[1:])
        _check_bits(*bits)
        return cls(fields[0], bits[:2], bits[2:])


def channel_name(j: int | None) -> str:
    return "E" if j is None else f"E{j}"


def _combine(records: Sequence[OutcomeRecord], channel: str) -> ParityMessage:
    widths = {len(r.b) for r in records}
    if len(widths) > 1:
        raise CodingError("records carry different numbers of X bits")
    width = widths.pop() if widths else 0
    a = (xor_all(r.a[0] for r in records), xor_all(r.a[1] for r in records))
    b = tuple(xor_all(r.b[k] for r in records) for k in range(width))
    return ParityMessage(channel, a, b)


def _check_terminals(records: Sequence[OutcomeRecord]) -> None:
    ids = [r.terminal for r in records]
    if len(set(ids)) != len(ids):
        raise CodingError(f"duplicate terminal ids in {ids}")


def encode_E(records: Sequence[OutcomeRecord]) -> ParityMessage:
    if len(records) < 2:
        raise CodingError("E needs at least two records")
    _check_terminals(records)
    return _combine(records, channel_name(None))


def encode_Ej(records: Sequence[OutcomeRecord], j: int) -> ParityMessage:
    """XOR over every record except terminal ``j``."""
    _check_terminals(records)
    if j not in {r.terminal for r in records}:
        raise CodingError(f"terminal {j} has no record")
    return _combine([r for r in records if r.terminal != j], channel_name(j))


def encode_all(records: Sequence[OutcomeRecord]) -> list[ParityMessage]:
    """E followed by E_j for every terminal, in record order."""
    return [encode_E(records)] + [encode_Ej(records, r.terminal) for r in records]


# Channel labels in the network drawing exclude a different terminal than the
# E_j formula does: drawn E1 = X1^X2, E2 = X2^X3, E3 = X1^X3 at n = 3.
FIGURE_CHANNEL_ALIASES = {"E1": "E3", "E2": "E1", "E3": "E2"}


def from_figure_label(label: str) -> str:
    return FIGURE_CHANNEL_ALIASES.get(label, label)


def _by_channel(messages: Iterable[ParityMessage]) -> dict[str, ParityMessage]:
    return {m.channel: m for m in messages}


def decode_record(messages: Iterable[ParityMessage], j: int) -> tuple[tuple, tuple]:
    """Recover terminal j's (a, b) bits as E xor E_j."""
    table = _by_channel(messages)
    try:
        e, ej = table["E"], table[channel_name(j)]
    except KeyError as exc:
        raise MissingChannelError(f"missing channel {exc.args[0]}") from None
    a = (e.a_parity[0] ^ ej.a_parity[0], e.a_parity[1] ^ ej.a_parity[1])
    b = tuple(x ^ y for x, y in zip(e.b_parity, ej.b_parity))
    return a, b


def correction_for_terminal(t: int, own: OutcomeRecord, messages: Sequence[ParityMessage], routing) -> PauliFrame:
    """Total frame that turns terminal ``t``'s held qubit into its sender's state.

    Only ``own`` and the parity messages are read. ``routing`` supplies
    ``held_copy(t)`` (the sender whose state arrives at ``t``) and
    ``x_measurers(copy)`` (terminal, slot) pairs for that copy's X bits.
    """
    if own.terminal != t:
        raise CodingError(f"record of terminal {own.terminal} passed for terminal {t}")
    sender = routing.held_copy(t)
    a, _ = decode_record(messages, sender)
    z_extra = 0
    for m, slot in routing.x_measurers(sender):
        _, b = decode_record(messages, m)
        z_extra = z_extra ^ b[slot]
    return outcome_to_frame(a, z_extra)


def residual_frame(own: OutcomeRecord, total: PauliFrame) -> PauliFrame:
    """Second-step frame once the terminal has already applied its own-outcome frame."""
    return compose_frames(total, own.own_frame())
