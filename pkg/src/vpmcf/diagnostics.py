"""Functionals evaluated on discrete states.

Energy measure, phase volume, discrepancy, dissipation residual, curvature
square integral, velocity, density ratios and the localized monotonicity
functional. All evaluators are pure functions of the fields passed in.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .interface import interface_measure
from .potential import SIGMA, eval_dW, eval_k, eval_W
from .torus_field import GridSpec, pairwise_sum

__all__ = [
    "DiagnosticsRecord",
    "CSV_COLUMNS",
    "energy_density",
    "discrepancy_field",
    "energy",
    "volume",
    "discrepancy_max",
    "dissipation_residual",
    "curvature_l2",
    "velocity_field",
    "unit_ball_volume",
    "DensityScanReport",
    "density_scan",
    "MonotonicityKernel",
    "MonotonicityResult",
    "HistoryEntry",
    "monotonicity_check",
    "make_record",
    "write_records_csv",
    "read_records_csv",
]


def energy_density(phi, eps: float, grid: GridSpec, disc=None) -> np.ndarray:
    """Pointwise ``eps |grad phi|^2 / 2 + W(phi) / eps`` (unnormalised)."""
    phi = grid.check(phi)
    return 0.5 * eps * grid.grad_norm_sq(phi, disc) + eval_W(phi) / eps


def discrepancy_field(phi, eps: float, grid: GridSpec, disc=None) -> np.ndarray:
    """Pointwise ``eps |grad phi|^2 / 2 - W(phi) / eps``.

    Uses the nodal gradient operator itself (for the central family this is
    the centred difference, not the summation-by-parts pairing).
    """
    phi = grid.check(phi)
    g = grid.gradient(phi, disc)
    return 0.5 * eps * np.sum(g * g, axis=0) - eval_W(phi) / eps


def energy(phi, eps: float, grid: GridSpec, disc=None) -> float:
    """Total mass of the energy measure, ``(1/sigma) * integral of e_eps``."""
    return grid.integrate(energy_density(phi, eps, grid, disc)) / SIGMA


def volume(phi, grid: GridSpec) -> float:
    """Phase volume ``integral of k(phi)``; conserved by the nonlocal flow."""
    return grid.integrate(eval_k(grid.check(phi)))


def discrepancy_max(phi, eps: float, grid: GridSpec, disc=None) -> float:
    return float(np.max(discrepancy_field(phi, eps, grid, disc)))


def dissipation_residual(
    energy_before: float,
    energy_after: float,
    phi_before,
    phi_after,
    dt: float,
    eps: float,
    grid: GridSpec,
) -> float:
    """``|E1 - E0 + (dt / sigma) * integral eps ((phi1 - phi0) / dt)^2|``."""
    rate = (grid.check(phi_after) - grid.check(phi_before)) / dt
    dissipated = dt * grid.integrate(eps * rate * rate) / SIGMA
    return abs(energy_after - energy_before + dissipated)


def curvature_l2(phi, eps: float, grid: GridSpec, disc=None) -> float:
    """``integral eps (Laplacian phi - W'(phi) / eps^2)^2``.

    Not normalised by the surface tension: for a circle of radius ``R`` this
    approaches ``sigma * 2 pi / R`` as ``eps -> 0``.
    """
    phi = grid.check(phi)
    res = grid.laplacian(phi, disc) - eval_dW(phi) / eps**2
    return grid.integrate(eps * res * res)


def velocity_field(phi_before, phi_after, dt: float, grid: GridSpec, disc=None) -> np.ndarray:
    """Diffuse normal velocity ``-(phi_t / |grad phi|) grad phi / |grad phi|``.

    The gradient is taken at the midpoint ``(phi0 + phi1) / 2``; nodes with
    ``|grad phi| < 1e-8 / h`` get zero velocity.
    """
    phi0 = grid.check(phi_before)
    phi1 = grid.check(phi_after)
    phi_t = (phi1 - phi0) / dt
    g = grid.gradient(0.5 * (phi0 + phi1), disc)
    gnorm = np.sqrt(np.sum(g * g, axis=0))
    active = gnorm >= 1e-8 / grid.h
    safe = np.where(active, gnorm, 1.0)
    return np.where(active, -phi_t / safe**2, 0.0) * g


def unit_ball_volume(k: int) -> float:
    """Lebesgue measure of the unit ball in ``R^k`` (``omega_k``)."""
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


@dataclass
class DensityScanReport:
    centers: np.ndarray  # (m, d)
    radii: np.ndarray  # (r,)
    ratios: np.ndarray  # (m, r)
    sup_ratio: float
    argsup_center: np.ndarray
    argsup_radius: float

    def rows(self):
        for i, c in enumerate(self.centers):
            for j, r in enumerate(self.radii):
                yield (*c, r, self.ratios[i, j])


def _center_indices(grid: GridSpec, centers) -> np.ndarray:
    """Flat node indices of the requested scan centres."""
    if centers is None or (isinstance(centers, str) and centers == "all"):
        return np.arange(grid.size)
    if isinstance(centers, (int, np.integer)):
        stride = int(centers)
        if stride < 1:
            raise ValueError("centre stride must be positive")
        sub = np.arange(0, grid.n, stride)
        mesh = np.meshgrid(*([sub] * grid.d), indexing="ij")
        return np.ravel_multi_index([m.ravel() for m in mesh], grid.shape)
    pts = np.atleast_2d(np.asarray(centers, dtype=float))
    if pts.shape[1] != grid.d:
        raise ValueError(f"centres must have {grid.d} coordinates")
    idx = np.rint((pts % 1.0) * grid.n).astype(int) % grid.n
    return np.ravel_multi_index(idx.T, grid.shape)


def density_scan(
    phi, eps: float, grid: GridSpec, radii: Sequence[float], centers="all", disc=None
) -> DensityScanReport:
    """Density ratios ``mu(B_R(x)) / (omega_{d-1} R^{d-1})`` over centres and radii.

    ``centers`` is ``"all"`` (every node), an integer stride, or an array of
    points (snapped to the nearest node). Balls use the periodic metric and
    whole-node masking.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0:
        raise ValueError("need a non-empty list of radii")
    if np.any(radii <= 0.0) or np.any(radii >= 0.25):
        raise ValueError("radii must lie in (0, 1/4)")
    dens = energy_density(phi, eps, grid, disc) / SIGMA
    idx = _center_indices(grid, centers)
    norm = unit_ball_volume(grid.d - 1)
    ratios = np.empty((idx.size, radii.size))
    for j, r in enumerate(radii):
        mass = grid.ball_sums(dens, r).ravel()[idx]
        # the FFT convolution can leave -1e-17 where the density vanishes
        ratios[:, j] = np.maximum(mass, 0.0) / (norm * r ** (grid.d - 1))
    pts = np.stack(np.unravel_index(idx, grid.shape), axis=-1) * grid.h
    flat = int(np.argmax(ratios))
    i, j = np.unravel_index(flat, ratios.shape)
    return DensityScanReport(pts, radii, ratios, float(ratios[i, j]), pts[i], float(radii[j]))


def _smoothstep_cutoff(dist):
    """1 on [0, 1/4], 0 on [1/2, inf), quintic C^2 monotone ramp between."""
    u = np.clip((np.asarray(dist, dtype=float) - 0.25) / 0.25, 0.0, 1.0)
    return 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)


@dataclass(frozen=True)
class MonotonicityKernel:
    """Truncated backward heat kernel centred at ``(y, s)``."""

    y: tuple
    s: float

    @staticmethod
    def eta(dist):
        return _smoothstep_cutoff(dist)

    def rho_tilde(self, grid: GridSpec, t: float) -> np.ndarray:
        if not t < self.s:
            raise ValueError(f"kernel needs t < s (t={t}, s={self.s})")
        tau = self.s - t
        dist = grid.distance(self.y)
        gauss = np.exp(-dist**2 / (4.0 * tau)) / (4.0 * math.pi * tau) ** ((grid.d - 1) / 2)
        return gauss * self.eta(dist)

    def weighted_energy(self, phi, eps: float, grid: GridSpec, t: float, disc=None) -> float:
        """``integral rho_tilde d mu_t``."""
        return grid.integrate(self.rho_tilde(grid, t) * energy_density(phi, eps, grid, disc)) / SIGMA

    def weighted_energy_masked(self, phi, eps: float, grid: GridSpec, t: float, disc=None) -> float:
        """Same quantity summed over the support nodes only."""
        mask = grid.distance(self.y) < 0.5
        prod = self.rho_tilde(grid, t) * energy_density(phi, eps, grid, disc) / SIGMA
        return grid.cell_volume * pairwise_sum(prod[mask])


@dataclass(frozen=True)
class HistoryEntry:
    t: float
    phi: np.ndarray
    lambda_sq_accum: float


@dataclass(frozen=True)
class MonotonicityResult:
    lhs: float
    rhs: float
    slack: float
    t1: float
    t2: float


def _ball_energy(phi, eps, grid, y, radius, disc=None) -> float:
    mask = grid.distance(y) < radius
    return grid.integrate(np.where(mask, energy_density(phi, eps, grid, disc), 0.0)) / SIGMA


def monotonicity_check(
    history: Sequence[HistoryEntry],
    kernel: MonotonicityKernel,
    t1: float,
    t2: float,
    eps: float,
    grid: GridSpec,
    c5: float = 1e3,
    disc=None,
) -> MonotonicityResult:
    """Compare both sides of the localized monotonicity inequality.

    ``t1`` and ``t2`` must be times stored in ``history``; the cut-off energy
    term is integrated by the trapezoid rule over the stored entries between
    them and the multiplier factor uses the accumulated ``integral lambda^2``.
    """
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    if not kernel.s > t2:
        raise ValueError(f"kernel time s={kernel.s} must exceed t2={t2}")
    times = np.array([e.t for e in history])

    def locate(t):
        i = int(np.argmin(np.abs(times - t)))
        if abs(times[i] - t) > 1e-12 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not stored in the history")
        return i

    i1, i2 = locate(t1), locate(t2)
    e1, e2 = history[i1], history[i2]
    lhs = kernel.weighted_energy(e2.phi, eps, grid, e2.t, disc)
    start = kernel.weighted_energy(e1.phi, eps, grid, e1.t, disc)
    window = history[i1 : i2 + 1]
    vals = np.array(
        [
            math.exp(-1.0 / (128.0 * (kernel.s - e.t))) * _ball_energy(e.phi, eps, grid, kernel.y, 0.5, disc)
            for e in window
        ]
    )
    ts = np.array([e.t for e in window])
    forcing = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts))) if len(ts) > 1 else 0.0
    growth = math.exp(e2.lambda_sq_accum - e1.lambda_sq_accum)
    rhs = (start + c5 * forcing) * growth
    return MonotonicityResult(lhs, rhs, rhs - lhs, e1.t, e2.t)


CSV_COLUMNS = (
    "t",
    "energy",
    "volume",
    "lambda",
    "lambda_sq_accum",
    "max_discrepancy",
    "dissipation_residual",
    "curvature_l2",
    "max_abs_phi",
    "interface_measure",
)


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    volume: float
    lambda_: float
    lambda_sq_accum: float
    max_discrepancy: float
    dissipation_residual: float
    curvature_l2: float
    max_abs_phi: float
    interface_measure: float
    step: int = 0
    dissipation_accum: float = 0.0

    def row(self) -> list[float]:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        return [d[c] for c in CSV_COLUMNS]


def make_record(state, grid: GridSpec, disc=None, previous=None, dt_last: float | None = None) -> DiagnosticsRecord:
    """Evaluate every per-step diagnostic on an evolution state.

    ``previous`` is ``(phi, energy)`` from the preceding step; when given, the
    dissipation residual of that single step is included.
    """
    phi, eps = state.phi, state.eps
    e_now = energy(phi, eps, grid, disc)
    resid = 0.0
    if previous is not None and dt_last:
        phi_prev, e_prev = previous
        resid = dissipation_residual(e_prev, e_now, phi_prev, phi, dt_last, eps, grid)
    rec = DiagnosticsRecord(
        t=state.t,
        energy=e_now,
        volume=volume(phi, grid),
        lambda_=state.last_lambda,
        lambda_sq_accum=state.lambda_sq_accum,
        max_discrepancy=discrepancy_max(phi, eps, grid, disc),
        dissipation_residual=resid,
        curvature_l2=curvature_l2(phi, eps, grid, disc),
        max_abs_phi=float(np.max(np.abs(phi))),
        interface_measure=interface_measure(phi, grid),
        step=state.step,
        dissipation_accum=state.dissipation_accum,
    )
    for f in fields(rec):
        v = getattr(rec, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise FloatingPointError(f"diagnostic {f.name} is not finite at t={state.t}")
    return rec


def write_records_csv(path, records: Sequence[DiagnosticsRecord]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([repr(float(v)) for v in r.row()])
    return path


def read_records_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: cols[:, i] for i, name in enumerate(header)}
