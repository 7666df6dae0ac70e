"""Graph-state networks tessellated into GHZ blocks, and multinode-failure recovery.

A network is a graph state: the input node starts in ``phi``, every other
node in ``|+>``, then CPHASE acts along each edge. Blocks are node subsets
that each own a one-shot GHZ resource. Recovery runs in two stages:

1. detection: per-node checks, status bits broadcast on each block's E / E_j
   channels so every member learns exactly which nodes are down;
2. repair: each failed node is cut out of the graph state (Z measurement plus
   Z corrections on its neighbours), then a fresh ``|+>`` is teleported into
   its place through the block's GHZ resource and re-linked by CPHASE.
"""
from __future__ import annotations

import enum
import warnings
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import networkx as nx
import numpy as np

from . import qsim
from .coding import OutcomeRecord, ParityMessage, correction_for_terminal, decode_record, encode_all
from .qsim import StateVector

MAX_NODES = 20
STABILIZER_TOL = 1e-9
PLUS = (2**-0.5, 2**-0.5)


class RecoveryError(ValueError):
    pass


class TopologyError(RecoveryError):
    def __init__(self, message: str, lineno: int | None = None):
        super().__init__(f"line {lineno}: {message}" if lineno else message)
        self.lineno = lineno


class InputLostError(RecoveryError):
    pass


class ResourceExhaustedError(RecoveryError):
    pass


class CriticalFailureError(RecoveryError):
    pass


class DisconnectedTopologyWarning(UserWarning):
    pass


class NodeStatus(enum.Enum):
    OPERATIVE = "operative"
    FAILED = "failed"
    EXCISED = "excised"
    SUBSTITUTED = "substituted"


class Criticality(str, enum.Enum):
    RECOVERABLE = "recoverable"
    CRITICAL = "critical"


@dataclass(frozen=True)
class NetworkTopology:
    nodes: tuple[int, ...]
    edges: frozenset[frozenset[int]]
    blocks: tuple[tuple[int, ...], ...]
    input_node: int | None = None

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise TopologyError("duplicate node ids")
        for e in self.edges:
            if len(e) != 2 or not e <= node_set:
                raise TopologyError(f"edge {sorted(e)} references unknown nodes or is a loop")
        covered = set()
        for block in self.blocks:
            if not set(block) <= node_set:
                raise TopologyError(f"block {block} references unknown nodes")
            covered |= set(block)
        if self.blocks and covered != node_set:
            raise TopologyError(f"blocks leave nodes uncovered: {sorted(node_set - covered)}")
        if self.input_node is not None and self.input_node not in node_set:
            raise TopologyError(f"input node {self.input_node} is not a node")

    @classmethod
    def build(cls, edges: Iterable[tuple[int, int]], blocks: Sequence[Sequence[int]] = (), nodes=(), input_node=None):
        edge_set = frozenset(frozenset(e) for e in edges)
        all_nodes = list(nodes)
        for e in edge_set:
            all_nodes.extend(e)
        for b in blocks:
            all_nodes.extend(b)
        ordered = tuple(sorted(set(all_nodes)))
        blocks = tuple(tuple(b) for b in blocks) or (ordered,)
        return cls(ordered, edge_set, blocks, input_node if input_node is not None else ordered[0])

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(tuple(e) for e in self.edges)
        return g

    def neighbors(self, v: int) -> set[int]:
        return _neighbors(self.edges, v)

    def blocks_of(self, v: int) -> list[int]:
        return [k for k, b in enumerate(self.blocks) if v in b]

    def boundary(self, k: int) -> set[int]:
        """Nodes of block k that also belong to another block."""
        return {v for v in self.blocks[k] if len(self.blocks_of(v)) > 1}


def _neighbors(edges: Iterable[frozenset[int]], v: int) -> set[int]:
    return {u for e in edges if v in e for u in e if u != v}


def parse_topology(text: str) -> NetworkTopology:
    """Parse ``node``/``edge``/``block``/``input`` lines; ``#`` starts a comment."""
    nodes, edges, blocks, input_node = [], [], [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        key, args = line[0], line[1:]
        try:
            ids = [int(a) for a in args]
        except ValueError:
            raise TopologyError(f"non-integer node id in {raw.strip()!r}", lineno) from None
        if key == "node" and len(ids) == 1:
            nodes.append(ids[0])
        elif key == "edge" and len(ids) == 2:
            if ids[0] == ids[1]:
                raise TopologyError("self-loop", lineno)
            edges.append(tuple(ids))
        elif key == "block" and ids:
            blocks.append(tuple(ids))
        elif key == "input" and len(ids) == 1:
            input_node = ids[0]
        else:
            raise TopologyError(f"cannot parse {raw.strip()!r}", lineno)
    known = set(nodes)
    for e in edges:
        missing = set(e) - known
        if missing:
            raise TopologyError(f"edge {e} uses undeclared node(s) {sorted(missing)}")
    return NetworkTopology.build(edges, blocks, nodes, input_node)


def load_topology(path: str | Path) -> NetworkTopology:
    return parse_topology(Path(path).read_text())


def format_topology(topology: NetworkTopology) -> str:
    lines = [f"node {v}" for v in topology.nodes]
    lines += [f"edge {a} {b}" for a, b in sorted(tuple(sorted(e)) for e in topology.edges)]
    lines += ["block " + " ".join(map(str, b)) for b in topology.blocks]
    if topology.input_node is not None:
        lines.append(f"input {topology.input_node}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GraphStateNetwork:
    topology: NetworkTopology
    state: StateVector
    order: tuple[int, ...]  # register position -> node id
    edges: frozenset[frozenset[int]]  # edges of the graph the state currently encodes
    phi: tuple[complex, complex] = PLUS
    consumed: frozenset[int] = frozenset()
    input_lost: bool = False
    history: tuple[str, ...] = ()

    @property
    def input_node(self) -> int:
        return self.topology.input_node

    def position(self, v: int) -> int:
        return self.order.index(v)

    def neighbors(self, v: int) -> set[int]:
        return _neighbors(self.edges, v)

    def _log(self, entry: str) -> tuple[str, ...]:
        return self.history + (entry,)


def _phi_is_plus(phi) -> bool:
    return qsim.prepare_arbitrary(*phi).overlap(qsim.prepare_plus()) > 1 - 1e-12


def prepare_graph_network(topology: NetworkTopology, phi: tuple[complex, complex] = PLUS) -> GraphStateNetwork:
    if len(topology.nodes) > MAX_NODES:
        raise RecoveryError(f"{len(topology.nodes)} nodes exceed the {MAX_NODES}-node limit")
    if len(topology.nodes) > 1 and not nx.is_connected(topology.graph()):
        warnings.warn("topology is disconnected", DisconnectedTopologyWarning, stacklevel=2)
    order = topology.nodes
    qubits = [qsim.prepare_arbitrary(*phi) if v == topology.input_node else qsim.prepare_plus() for v in order]
    state = qsim.tensor_all(qubits)
    for e in sorted(tuple(sorted(e)) for e in topology.edges):
        state = qsim.apply_cphase(state, order.index(e[0]), order.index(e[1]))
    return GraphStateNetwork(topology, state, order, topology.edges, tuple(complex(v) for v in phi))


def stabilizer_expectations(network: GraphStateNetwork) -> dict[int, float]:
    """<K_v> with K_v = X_v prod_{u in N(v)} Z_u on the current graph."""
    out = {}
    for v in network.order:
        paulis = {network.position(v): "X"}
        for u in network.neighbors(v):
            paulis[network.position(u)] = "Z"
        out[v] = qsim.expectation(network.state, paulis)
    return out


def checked_nodes(network: GraphStateNetwork) -> list[int]:
    """Nodes whose stabilizer must be +1 (the input node only if it holds |+>)."""
    skip_input = not network.input_lost and not _phi_is_plus(network.phi)
    return [v for v in network.order if not (skip_input and v == network.input_node)]


def stabilizers_hold(network: GraphStateNetwork, tol: float = STABILIZER_TOL) -> bool:
    exp = stabilizer_expectations(network)
    return all(abs(exp[v] - 1) <= tol for v in checked_nodes(network))


@dataclass(frozen=True)
class DetectorModel:
    false_negative_rate: float = 0.0
    false_positive_rate: float = 0.0

    def __post_init__(self):
        for rate in (self.false_negative_rate, self.false_positive_rate):
            if not 0 <= rate <= 1:
                raise RecoveryError(f"detector rate {rate} outside [0, 1]")

    @property
    def ideal(self) -> bool:
        return self.false_negative_rate == 0 and self.false_positive_rate == 0


def detect_failures(
    network: GraphStateNetwork,
    true_failures: Iterable[int],
    detector: DetectorModel = DetectorModel(),
    rng: qsim.RandomSource | None = None,
) -> dict[int, NodeStatus]:
    """Reported status of every node. Random draws happen only for nonzero rates."""
    failures = set(true_failures)
    unknown = failures - set(network.topology.nodes)
    if unknown:
        raise RecoveryError(f"unknown failed nodes {sorted(unknown)}")
    if not detector.ideal and rng is None:
        raise RecoveryError("a noisy detector needs a random source")
    out = {}
    for v in network.topology.nodes:
        if v in failures:
            missed = detector.false_negative_rate > 0 and rng.random() < detector.false_negative_rate
            out[v] = NodeStatus.OPERATIVE if missed else NodeStatus.FAILED
        else:
            alarm = detector.false_positive_rate > 0 and rng.random() < detector.false_positive_rate
            out[v] = NodeStatus.FAILED if alarm else NodeStatus.OPERATIVE
    return out


def _status_bit(status) -> int:
    if isinstance(status, NodeStatus):
        return int(status in (NodeStatus.OPERATIVE, NodeStatus.SUBSTITUTED))
    return int(status)


def broadcast_status(block: Sequence[int], statuses: Mapping[int, object]) -> list[ParityMessage]:
    """Encode one status bit per node (1 = operative) on the block's E / E_j channels."""
    missing = [v for v in block if v not in statuses]
    if missing:
        raise RecoveryError(f"no status for nodes {missing}")
    records = [OutcomeRecord(v, (0, 0), (_status_bit(statuses[v]),)) for v in block]
    return encode_all(records)


def decode_status(messages: Sequence[ParityMessage], block: Sequence[int]) -> dict[int, int]:
    return {v: int(decode_record(messages, v)[1][0]) for v in block}


def excise_node(
    network: GraphStateNetwork,
    node: int,
    rng: qsim.RandomSource,
    *,
    allow_input_loss: bool = False,
) -> GraphStateNetwork:
    """Delete ``node`` from the graph state: Z-measure it, then Z its neighbours on outcome 1."""
    if node not in network.order:
        raise RecoveryError(f"node {node} is not in the register")
    lost = node == network.input_node and not network.input_lost
    if lost and not allow_input_loss:
        raise InputLostError(f"excising input node {node} destroys the input state")
    outcome, state = qsim.measure_z(network.state, network.position(node), rng)
    order = tuple(v for v in network.order if v != node)
    nbrs = sorted(network.neighbors(node))
    if outcome:
        for u in nbrs:
            state = qsim.apply_pauli(state, "Z", order.index(u))
    edges = frozenset(e for e in network.edges if node not in e)
    return replace(
        network,
        state=state,
        order=order,
        edges=edges,
        input_lost=network.input_lost or lost,
        history=network._log(f"excise {node} z={outcome} corrected={nbrs if outcome else []}"),
    )


class _BlockRouting:
    """Routing view of one substitution for :func:`correction_for_terminal`."""

    def __init__(self, host: int, donor: int, measurers: Sequence[int]):
        self.host, self.donor, self.measurers = host, donor, list(measurers)

    def held_copy(self, t: int) -> int:
        return self.donor

    def x_measurers(self, copy: int) -> list[tuple[int, int]]:
        return [(m, 0) for m in self.measurers]


def _teleport_plus(block: Sequence[int], donor: int, host: int, rng: qsim.RandomSource) -> tuple[StateVector, float, list[str]]:
    """Send a fresh |+> from ``donor`` to ``host`` through the block's GHZ resource."""
    labels = ["in", *block]
    state = qsim.tensor(qsim.prepare_plus(), qsim.prepare_ghz(len(block)))
    a, state = qsim.measure_bell(state, labels.index("in"), labels.index(donor), rng)
    labels.remove("in")
    labels.remove(donor)
    measurers = [v for v in block if v not in (donor, host)]
    bits = {}
    for m in measurers:
        bits[m], state = qsim.measure_x(state, labels.index(m), rng)
        labels.remove(m)
    records = [
        OutcomeRecord(v, a if v == donor else (0, 0), (bits.get(v, 0),))
        for v in block
    ]
    messages = encode_all(records)
    host_record = next(r for r in records if r.terminal == host)
    frame = correction_for_terminal(host, host_record, messages, _BlockRouting(host, donor, measurers))
    state = qsim.apply_pauli(state, frame.name, 0)
    fidelity = state.overlap(qsim.prepare_plus())
    return state, fidelity, [m.to_line() for m in messages]


def substitute_node(
    network: GraphStateNetwork,
    failed: int,
    block: int,
    rng: qsim.RandomSource,
) -> GraphStateNetwork:
    """Install a fresh qubit for an excised node through block ``block``'s GHZ resource.

    The node's spare GHZ share receives ``|+>`` from the first operative block
    member; every other block member X-measures its share. The new qubit is
    then CPHASE-linked to the node's surviving original neighbours.
    """
    members = network.topology.blocks[block]
    if failed not in members:
        raise RecoveryError(f"node {failed} is not in block {block}")
    if failed in network.order:
        raise RecoveryError(f"node {failed} is still in the register; excise it first")
    if block in network.consumed:
        raise ResourceExhaustedError(f"GHZ resource of block {block} already consumed")
    donors = [v for v in members if v in network.order and v != failed]
    if not donors:
        raise RecoveryError(f"block {block} has no operative node to drive the substitution")
    fresh, fidelity, lines = _teleport_plus(members, donors[0], failed, rng)

    state = qsim.tensor(network.state, fresh)
    order = network.order + (failed,)
    relinked = sorted(u for u in network.topology.neighbors(failed) if u in order)
    for u in relinked:
        state = qsim.apply_cphase(state, order.index(u), order.index(failed))
    edges = network.edges | {frozenset((u, failed)) for u in relinked}
    entry = f"substitute {failed} block={block} donor={donors[0]} fidelity={fidelity:.12f} links={relinked}"
    return replace(
        network,
        state=state,
        order=order,
        edges=edges,
        consumed=network.consumed | {block},
        history=network._log(entry),
    )


def replenish_resource(network: GraphStateNetwork, block: int, *, enabled: bool = False) -> GraphStateNetwork:
    if not enabled:
        raise ResourceExhaustedError("resource replenishment is disabled")
    return replace(network, consumed=network.consumed - {block}, history=network._log(f"replenish block={block}"))


def critical_blocks(topology: NetworkTopology, failures: Iterable[int], flank_scope: str = "block") -> list[int]:
    """Blocks cut off by ``failures``.

    A block is critical when its whole boundary has failed and, for every
    connected run of boundary nodes, so have the nodes flanking that run.
    ``flank_scope`` picks where flanks are looked for: inside the block
    (``"block"``) or anywhere in the graph (``"graph"``).
    """
    if flank_scope not in ("block", "graph"):
        raise ValueError(f"unknown flank scope {flank_scope!r}")
    failed = set(failures)
    g = topology.graph()
    out = []
    for k, members in enumerate(topology.blocks):
        boundary = topology.boundary(k)
        if not boundary or not boundary <= failed:
            continue
        block_graph = g.subgraph(members)
        critical = True
        for run in nx.connected_components(block_graph.subgraph(boundary)):
            scope = block_graph if flank_scope == "block" else g
            flanks = {u for v in run for u in scope.neighbors(v)} - run
            if not flanks <= failed:
                critical = False
                break
        if critical:
            out.append(k)
    return out


def criticality_check(topology: NetworkTopology, failures: Iterable[int], flank_scope: str = "block") -> Criticality:
    failures = set(failures)
    if not failures <= set(topology.nodes):
        raise RecoveryError(f"unknown failed nodes {sorted(failures - set(topology.nodes))}")
    return Criticality.CRITICAL if critical_blocks(topology, failures, flank_scope) else Criticality.RECOVERABLE


@dataclass
class RecoveryReport:
    status: str  # intact | recovered | partial | unrecoverable
    reported: tuple[int, ...] = ()
    undetected: tuple[int, ...] = ()
    false_alarms: tuple[int, ...] = ()
    decoded: dict[int, dict[int, int]] = field(default_factory=dict)
    critical_blocks: tuple[int, ...] = ()
    excised: tuple[int, ...] = ()
    substituted: dict[int, int] = field(default_factory=dict)
    unrepaired: tuple[int, ...] = ()
    data_loss: bool = False
    stabilizers: dict[int, float] = field(default_factory=dict)
    stabilizers_ok: bool = True
    untouched_ok: bool = True


def _untouched_nodes(topology: NetworkTopology, failures: set[int]) -> list[int]:
    return [v for v in topology.nodes if v not in failures and not (topology.neighbors(v) & failures)]


def recover(
    network: GraphStateNetwork,
    true_failures: Iterable[int],
    detector: DetectorModel = DetectorModel(),
    rng: qsim.RandomSource | None = None,
    *,
    flank_scope: str = "block",
) -> tuple[GraphStateNetwork, dict[int, NodeStatus], RecoveryReport]:
    """Detect, broadcast, classify, then excise and substitute every reported failure.

    A critical configuration is a result, not an exception: failures that a
    non-critical block can absorb are still repaired and the rest stay excised.
    """
    rng = rng if rng is not None else qsim.random_source(0)
    topo = network.topology
    true_set = set(true_failures)
    reported_map = detect_failures(network, true_set, detector, rng)
    reported = {v for v, s in reported_map.items() if s is NodeStatus.FAILED}
    report = RecoveryReport(
        status="intact",
        reported=tuple(sorted(reported)),
        undetected=tuple(sorted(true_set - reported)),
        false_alarms=tuple(sorted(reported - true_set)),
    )
    statuses = dict(reported_map)
    if not reported:
        report.stabilizers = stabilizer_expectations(network)
        report.stabilizers_ok = stabilizers_hold(network)
        return network, statuses, report

    for k, members in enumerate(topo.blocks):
        if reported & set(members):
            report.decoded[k] = decode_status(broadcast_status(members, reported_map), members)

    crit = set(critical_blocks(topo, reported, flank_scope))
    report.critical_blocks = tuple(sorted(crit))

    for v in sorted(reported):
        network = excise_node(network, v, rng, allow_input_loss=True)
        statuses[v] = NodeStatus.EXCISED
    report.excised = tuple(sorted(reported))

    for v in sorted(reported):
        usable = [k for k in topo.blocks_of(v) if k not in crit and k not in network.consumed]
        if not usable:
            continue
        try:
            network = substitute_node(network, v, usable[0], rng)
        except RecoveryError:
            continue
        statuses[v] = NodeStatus.SUBSTITUTED
        report.substituted[v] = usable[0]

    report.unrepaired = tuple(v for v in sorted(reported) if v not in report.substituted)
    report.data_loss = network.input_lost
    report.stabilizers = stabilizer_expectations(network)
    report.stabilizers_ok = stabilizers_hold(network)
    untouched = [v for v in _untouched_nodes(topo, reported) if v in network.order]
    report.untouched_ok = all(abs(report.stabilizers[v] - 1) <= STABILIZER_TOL for v in untouched if v in checked_nodes(network))
    if crit:
        report.status = "unrecoverable"
    elif report.unrepaired:
        report.status = "partial"
    else:
        report.status = "recovered"
    return network, statuses, report


def fidelity_between(a: GraphStateNetwork, b: GraphStateNetwork) -> float:
    """Overlap of two networks' states after aligning register order by node id."""
    if set(a.order) != set(b.order):
        return 0.0
    psi = b.state.tensor_view()
    perm = [b.order.index(v) for v in a.order]
    aligned = np.transpose(psi, perm).reshape(-1) if perm else psi
    return float(abs(np.vdot(a.state.amplitudes, aligned)) ** 2)
