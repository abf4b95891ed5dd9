"""
Statevector basics
==================

Gates, measurement probabilities and sampling on a few qubits.
"""

# %%
import numpy as np

from pqfl import qsim
from pqfl.qsim import CNOT, RY, H

# qubit 0 is the leftmost ket position, i.e. the high bit of the index
psi = qsim.new_statevector(2)
psi.amplitudes

# %%
# Bell state: H on qubit 0, then CNOT 0 -> 1
bell = qsim.apply_circuit(psi, [H(0), CNOT(0, 1)])
print(np.round(bell.amplitudes, 4))

# %%
# RY takes the full angle: RY(pi/3)|0> has p0 = cos^2(pi/6) = 0.75
s = qsim.apply_gate(qsim.new_statevector(1), RY(0, np.pi / 3))
print(qsim.prob_zero(s, 0), qsim.expectation_pauli_z(s, 0))

# %%
# shot sampling
rng = np.random.default_rng(0)
shots = 10_000
print(qsim.sample_counts(s, 0, shots, rng) / shots)

# %%
# any gate followed by its inverse is the identity
gates = [H(0), RY(1, 0.7), CNOT(1, 0), qsim.RZ(0, 1.3)]
back = qsim.apply_circuit(qsim.apply_circuit(bell, gates), [g.inverse() for g in reversed(gates)])
print(np.abs(back.amplitudes - bell.amplitudes).max())
