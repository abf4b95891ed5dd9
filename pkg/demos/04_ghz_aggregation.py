"""
Weighted averaging through GHZ registers
========================================

Each client adds a phase F_m * theta_m to its own qubit of a shared GHZ
state. Undoing the preparation leaves the phase sum on qubit 0, while every
single qubit on its own looks maximally mixed.
"""

# %%
import numpy as np

from pqfl import protocol, qsim

F = protocol.weighted_scores([120, 360, 520])
theta = np.array([0.4, 1.2, 2.0])
ghz = protocol.ghz_prepare(3)
enc = protocol.encode_phases(ghz, F.F * theta)
dec = protocol.decode_ghz(enc)
p0 = qsim.prob_zero(dec, 0)
print(protocol.estimate_angle(p0), F.F @ theta)

# %%
# what one client's qubit reveals: I/2
print(np.round(protocol.reduced_density(enc, 1), 12))

# %%
# full uplink over 48 parameters
rng = np.random.default_rng(2)
thetas = rng.uniform(0, np.pi - 0.05, (3, 48))
agg, transcript = protocol.aggregate_uplink(thetas, F, protocol.ChannelConfig("ideal"))
print(np.abs(agg - F.F @ thetas).max(), transcript.records[0])

# %%
# with finite shots the estimate is noisy, variance ~ 1/R
slope, var = protocol.shot_noise_slope(seed=3)
slope, var
