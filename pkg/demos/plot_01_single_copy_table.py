"""
One GHZ copy, one input qubit
=============================

A sender Bell-measures its input together with its share of a three-qubit
GHZ state. A second holder then measures its share in the X basis. The
third holder is left with the input, up to a Pauli fix-up that depends on
the two results. This script walks through all eight cases.
"""

import numpy as np

from qbutterfly import butterfly, qsim

# A lopsided input, so that sign and swap errors are easy to spot.
alpha, beta = 0.6, 0.8j

# %%
# The sender's Bell outcome fixes the two-qubit residual left on the
# other two GHZ shares.
for a in [(0, 0), (0, 1), (1, 0), (1, 1)]:
    residual = butterfly.table1_residual(a, alpha, beta)
    print(qsim.TABLE_BELL_LABELS[a], np.round(residual.amplitudes, 3))

# %%
# After the X measurement only one qubit remains. ``check_table1`` runs
# every row and reports how well the listed correction restores the input.
for row in butterfly.check_table1(alpha, beta):
    print(f"a={row.a} b={row.b} U={row.correction:2s} p={row.bell_probability:.2f} F={row.restored_fidelity:.12f}")
