"""
Label-skewed client splits
==========================

Per-label client shares come from a symmetric Dirichlet; small alpha gives
lopsided clients.
"""

# %%
import numpy as np

from pqfl import data as pdata

train = pdata.filter_binary(pdata.load_split("train"))
np.bincount(train.labels)

# %%
for alpha in (1.0, 10.0, 100.0):
    rng = np.random.default_rng(0)
    D = pdata.sample_partition_matrix(alpha, 2, 4, rng)
    idx = pdata.partition_indices(train.labels, D, rng)
    counts = np.array([np.bincount(train.labels[i], minlength=2) for i in idx])
    print(f"alpha={alpha:g}")
    print(counts.T)  # rows: label, columns: client

# %%
# sample counts are rounded by largest remainder, so nothing is lost
pdata.largest_remainder([0.5, 0.5], 101), pdata.largest_remainder([0.2, 0.3, 0.5], 7)
