"""
Two discs exchanging area
=========================

Under volume preserving mean curvature flow the smaller of two discs
shrinks and feeds the larger one; the total area is conserved. For spheres
the sharp-interface law reduces to an ODE system for the radii, which we
integrate with adaptive RK4 and use as ground truth for the phase field.

Run with ``python3 demos/02_two_discs_vs_oracle.py``.
"""

import numpy as np

from vpmcf import Ball, GridSpec, StepperSpec, UnionOfBalls, fit_spheres, initial_state, make_initial
from vpmcf import oracle_integrate, run, volume

n = 256
eps = 4 / n
grid = GridSpec(2, n)
shape = UnionOfBalls((Ball((0.22, 0.22), 0.15), Ball((0.6, 0.6), 0.25)))
T_half = 0.0226816  # the small radius reaches 0.075 here

oracle = oracle_integrate([0.15, 0.25], T_half)
state = initial_state(make_initial(shape, eps, grid), eps, "golovaty", grid)
stepper = StepperSpec("semi-implicit-bdf2", dt=0.1 * eps**2)
v0 = volume(state.phi, grid)

print(f"{'t':>8} {'R1':>9} {'oracle':>9} {'R2':>9} {'oracle':>9} {'rel err':>8}")
for t in np.linspace(0.0, T_half, 7)[1:]:
    state, _ = run(state, stepper, grid, t, cadence=10**6)
    fitted = sorted(s.radius for s in fit_spheres(state.phi, grid))
    ref = oracle.at(t)
    err = np.max(np.abs(np.array(fitted) - ref) / ref)
    print(f"{t:8.4f} {fitted[0]:9.5f} {ref[0]:9.5f} {fitted[1]:9.5f} {ref[1]:9.5f} {err:8.2%}")

print(f"\nphase volume drift: {abs(volume(state.phi, grid) - v0):.2e}")
