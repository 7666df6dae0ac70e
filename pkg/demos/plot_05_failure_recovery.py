"""
Repairing a graph-state network after node failures
===================================================

A ten-node graph state is split into three overlapping GHZ blocks. When
nodes fail, each block broadcasts status bits over the same XOR channels
the butterfly uses. Failed nodes are cut out of the graph, and each block's
GHZ state then carries in a fresh replacement.
"""

from pathlib import Path

from qbutterfly import qsim, recovery

here = Path(__file__).resolve().parent
topology = recovery.load_topology(here.parent / "scenarios" / "fig2_network.topo")
network = recovery.prepare_graph_network(topology, phi=(0.6, 0.8))
print("boundaries:", [sorted(topology.boundary(k)) for k in range(len(topology.blocks))])
print("stabilizers hold:", recovery.stabilizers_hold(network))

# %%
# Two failures in different blocks can both be repaired.
repaired, statuses, report = recovery.recover(network, {2, 6}, rng=qsim.random_source(2))
print(report.status, report.substituted)
print("\n".join(repaired.history))
print("overlap with the original:", round(recovery.fidelity_between(repaired, network), 12))

# %%
# Losing a block's whole boundary, plus the nodes next to it, cuts the
# block off. The report says so, and the rest of the graph is unharmed.
_, _, report = recovery.recover(network, {4, 5, 7, 8}, rng=qsim.random_source(2))
print(report.status, "critical blocks:", report.critical_blocks, "untouched ok:", report.untouched_ok)
