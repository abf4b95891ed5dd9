"""
A short federated run
=====================

Two clients with label skew, personalized layers on, ideal channel.
"""

# %%
import numpy as np

from pqfl import orchestrator as orch

cfg = orch.FedConfig(clients=2, alpha=1.0, rounds=20, sample_cap=200, test_cap=400, seed=0)
fed = orch.prepare_data(cfg)
fed.client_sizes, [np.bincount(y, minlength=2).tolist() for y in fed.client_labels]

# %%
res = orch.run_federated(cfg, fed)
for m in res.metrics[::4] + [res.metrics[-1]]:
    print(m.round, round(m.server_acc, 3), np.round(m.client_acc, 3), round(m.global_objective, 4))

# %%
# the same clients without personalized layers
plain = orch.run_federated(cfg.replace(personalized=False), fed)
res.metrics[-1].mean_client_acc, plain.metrics[-1].mean_client_acc

# %%
# the personalized angles stay on the clients and drift apart
np.round(res.clients[0].theta_p - res.clients[1].theta_p, 3)
