"""
A disc under the nonlocal flow versus plain Allen-Cahn
======================================================

A disc is a stationary shape for volume preserving mean curvature flow,
while ordinary mean curvature flow shrinks it like sqrt(R0^2 - 2t). We run
both phase-field models from the same initial data and compare the fitted
radius with each sharp-interface prediction.

Run with ``python3 demos/01_stationary_disc.py``.
"""

import math

from vpmcf import Ball, GridSpec, StepperSpec, fit_spheres, initial_state, make_initial, run

n = 128
eps = 4 / n  # four grid cells across the interface
grid = GridSpec(2, n)
phi0 = make_initial(Ball((0.5, 0.5), 0.3), eps, grid)

# second-order IMEX stepping keeps dt / eps^2 = 0.1 accurate
stepper = StepperSpec("semi-implicit-bdf2", dt=0.1 * eps**2)

print(f"{'t':>8} {'golovaty R':>12} {'allen-cahn R':>13} {'sqrt(R0^2-2t)':>14}")
states = {v: initial_state(phi0, eps, v, grid) for v in ("golovaty", "plain-allen-cahn")}
for t in (0.004, 0.008, 0.012, 0.016):
    for v in states:
        states[v], _ = run(states[v], stepper, grid, t, cadence=10**6)
    (g,) = fit_spheres(states["golovaty"].phi, grid)
    (a,) = fit_spheres(states["plain-allen-cahn"].phi, grid)
    print(f"{t:8.3f} {g.radius:12.5f} {a.radius:13.5f} {math.sqrt(0.09 - 2 * t):14.5f}")

# the multiplier history: lambda settles at the disc's constant curvature term
s = states["golovaty"]
print(f"\nlast lambda = {s.last_lambda:.4f}, integral of lambda^2 so far = {s.lambda_sq_accum:.4f}")
