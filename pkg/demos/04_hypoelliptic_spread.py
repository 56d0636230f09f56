"""
Noise on four modes reaches the rest
====================================

Forcing only (1, 0), (1, 1) and their mirrors still excites every mode: the
nonlinearity couples the forced wave vectors to their sums and differences.
Switching advection off keeps the other modes exactly at rest.
"""

from stochns import ergodic, noise, sde
from stochns import spectral as sp

Z0 = [(1, 0), (-1, 0), (1, 1), (-1, -1)]
print("forcing-set conditions:", noise.z0_conditions(Z0))

grid = sp.make_grid(6)
cfg = sde.SimConfig(grid=grid, nu=1.0, dt=0.005, horizon=40.0,
                    noise=noise.AdditiveDegenerate(grid, Z0, q=10.0), seed=2, record_every=100)

for advection in (True, False):
    rep = ergodic.mode_activation(cfg.replace(advection=advection), n_replicas=4, lam_max=5)
    print(f"\nadvection={advection}")
    print(f"{'k1':>3} {'k2':>3} {'|k|^2':>5} {'forced':>6} {'variance':>11}")
    for k1, k2, lam, forced, var, _ in rep.table():
        if k1 > 0 or (k1 == 0 and k2 > 0):
            print(f"{k1:3d} {k2:3d} {lam:5d} {str(forced):>6} {var:11.3e}")
