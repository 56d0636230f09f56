"""
Nudged copies and synchronization
=================================

A copy of the solution that is steered on its first N modes towards the
reference, and driven by the same noise path, forgets its initial
condition.  At this low Reynolds number the free copy (N = 0) also drifts
towards the reference, many orders of magnitude more slowly; with stronger
forcing (see the acceptance tests) it does not.
"""

import numpy as np

from stochns import coupling, noise, sde
from stochns import spectral as sp

grid = sp.make_grid(8)
rng = np.random.default_rng(0)
u0 = sp.random_field(grid, rng, slope=1.0, dealiased=True)
v0 = sp.random_field(grid, rng, slope=1.0, dealiased=True)

# %%
# Multiplicative noise on the first 24 directions has a right inverse on
# them, so the nudge is a Girsanov shift of the noise and its cost is tracked.
cfg = sde.SimConfig(grid=grid, nu=1.0, dt=0.005, horizon=10.0,
                    noise=noise.MultiplicativeLowMode(grid, 24),
                    forcing=sp.from_modes(grid, {(0, 3): 200.0}), initial=u0, seed=3)
nudged, free = coupling.fp_experiment(cfg, [24, 0], 16, 10, v0, record_every=100)

# %%
for t in (0.0, 2.0, 5.0, 10.0):
    print(f"t={t:5.1f}  gap N=24 {nudged.gap_at(t):10.3e}   gap N=0 {free.gap_at(t):10.3e}")
print("power fit", nudged.fit)
print("first m with P(gap(n) <= 1/n^2 for all n >= m) > 1/2:", nudged.m_star,
      "Wilson 95% interval", nudged.m_star_ci)
print("mean accumulated shift energy", nudged.drift_mean)
