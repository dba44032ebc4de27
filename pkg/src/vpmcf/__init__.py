"""Phase-field volume-preserving mean curvature flow on the periodic unit torus.

Nonlocal Allen-Cahn solvers (Golovaty, Rubinstein-Sternberg, Brassel-Bretin
and plain Allen-Cahn) on ``[0, 1)^d``, well-prepared initial data, diagnostics
for the energy identities, and a sharp-interface oracle for unions of spheres.
"""

from .diagnostics import (
    DiagnosticsRecord,
    MonotonicityKernel,
    curvature_l2,
    density_scan,
    discrepancy_max,
    energy,
    monotonicity_check,
    volume,
)
from .dynamics import (
    EquationVariant,
    EvolutionState,
    MultiplierMode,
    Scheme,
    StepperSpec,
    initial_state,
    lambda_golovaty,
    run,
    step,
)
from .initial_data import Ball, Ellipse, Implicit, UnionOfBalls, check_well_prepared, make_initial
from .interface import fit_spheres, interface_measure
from .oracle import oracle_integrate, oracle_rhs
from .potential import SIGMA, eval_k, eval_W
from .torus_field import Discretization, GridSpec, ScalarField, read_snapshot, write_snapshot

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "DiagnosticsRecord",
    "Discretization",
    "Ellipse",
    "EquationVariant",
    "EvolutionState",
    "GridSpec",
    "Implicit",
    "MonotonicityKernel",
    "MultiplierMode",
    "SIGMA",
    "ScalarField",
    "Scheme",
    "StepperSpec",
    "UnionOfBalls",
    "check_well_prepared",
    "curvature_l2",
    "density_scan",
    "discrepancy_max",
    "energy",
    "eval_W",
    "eval_k",
    "fit_spheres",
    "initial_state",
    "interface_measure",
    "lambda_golovaty",
    "make_initial",
    "monotonicity_check",
    "oracle_integrate",
    "oracle_rhs",
    "read_snapshot",
    "run",
    "step",
    "volume",
    "write_snapshot",
]
