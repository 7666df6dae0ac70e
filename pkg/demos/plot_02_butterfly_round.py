"""
A single round of the quantum butterfly
=======================================

Three terminals each hold a qubit, and each must end up with a neighbour's
qubit. There are three GHZ copies, one per input. The only classical
traffic is the XOR broadcasts ``E`` and ``E1``..``E3``.
"""

from qbutterfly import butterfly, qsim

rng = qsim.random_source(7)
inputs = butterfly.random_inputs(3, rng)
instance = butterfly.build_instance(3, inputs)
print("register size:", instance.num_qubits, "qubits")

# %%
# Clockwise routing: terminal 1 ends up with input 3, terminal 2 with
# input 1, and so on.
routing = butterfly.RoutingConfig(3, "clockwise")
transcript = butterfly.run_round(instance, routing, rng)
print(transcript.to_text())

# %%
# Flipping the chirality sends every qubit the other way round the ring.
ccw = butterfly.run_round(instance, routing.flipped(), rng)
print("received:", ccw.received)
print("fidelities:", {t: round(f, 12) for t, f in ccw.final_fidelities.items()})

# %%
# Each terminal decodes another's record as ``E xor E_j``. Corrupting one
# broadcast bit shows that the corrections really do depend on it.
broken = butterfly.run_round(instance, routing, qsim.random_source(1), message_fault=butterfly.flip_message_bit("E2", 0))
print("with a flipped bit:", {t: round(f, 3) for t, f in broken.final_fidelities.items()})
