"""
Configured runs and a time-step sweep
=====================================

The harness reads an INI file, writes CSV time series, snapshots and a
summary per run, and repeats runs over refinement factors. This is what
``vpmcf run`` and ``vpmcf sweep`` do; here we drive it from Python.

Run with ``python3 demos/03_config_and_sweep.py [output-dir]``.
"""

import csv
import sys
import tempfile
from pathlib import Path

from vpmcf.harness import RunConfig, run_experiment, sweep

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="vpmcf-demo-"))

ini = """
[grid]
d = 2
n = 128
discretization = spectral

[model]
eps = 0.03125
variant = golovaty

[shape]
kind = ellipse
center = 0.5, 0.5
semi_axes = 0.3, 0.18

[stepper]
scheme = semi-implicit-spectral
dt_over_eps2 = 0.1
multiplier_mode = analytic

[run]
T = 0.004
cadence = 4
snapshot_every = 16
"""
cfg = RunConfig.from_ini(ini)
res = run_experiment(cfg, out / "single")
print("single run written to", res.out_dir)
for key in ("volume_drift", "dissipation_residual", "max_abs_phi", "max_density_ratio"):
    print(f"  {key:22s} {res.summary[key]:.3e}")

# halving dt halves the analytic-mode volume drift (first-order scheme)
path = sweep(cfg, "dt", [1.0, 0.5, 0.25], out / "sweep")
print("\ndt sweep:", path)
for row in csv.DictReader(open(path)):
    print(f"  dt={float(row['dt']):.3e}  drift={float(row['volume_drift']):.3e}  order={row['order_volume_drift']}")
