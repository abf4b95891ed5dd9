"""
Communication and storage cost
==============================
"""

# %%
from pqfl import orchestrator as orch

for M in (2, 4, 8):
    rep = orch.overhead_report(orch.FedConfig(clients=M, rounds=100))
    print(M, rep.t_down, rep.t_up, rep.server_storage, rep.client_storage)

# %%
# depths count layer repetitions: k for the server, k + 1 with the personal layer
rep.server_depth, rep.client_depth, rep.circuit_qubits
