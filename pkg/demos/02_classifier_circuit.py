"""
The classifier circuit
======================

A pooled image is amplitude encoded on 4 qubits, passed through k base
slices and one personalized layer, and scored by <Z> on qubits 0 and 1.
"""

# %%
import numpy as np

from pqfl import data as pdata
from pqfl.circuits import ModelParams, base_layer_circuit, client_circuit, model_scores, predict

test = pdata.filter_binary(pdata.load_split("test"))
x = pdata.preprocess_batch(test.images[:8])
x.shape, np.linalg.norm(x, axis=1)

# %%
# one base slice: 8 single-qubit RY, then 4 ring blocks CNOT-RY-RY-CNOT
for g in base_layer_circuit(np.arange(16) / 10, 4)[:12]:
    print(g.kind, g.targets, g.angle)

# %%
rng = np.random.default_rng(1)
params = ModelParams(rng.uniform(0, np.pi, 48), np.zeros(8))
len(client_circuit(params)), params.size

# %%
scores = model_scores(params, x)
print(np.round(scores, 3))
print("predicted", predict(scores), "true", test.labels[:8])
