"""Sharp-interface reference: radii of disjoint spheres under (volume-preserving) MCF.

For spheres of radii ``R_i`` in ``R^d`` the mean curvature is ``(d-1)/R_i``
and its area-weighted average is ``(d-1) sum R^{d-2} / sum R^{d-1}``, so

    dR_i/dt = -(d-1)/R_i + (d-1) * sum_j R_j^{d-2} / sum_j R_j^{d-1}

which keeps ``sum_i R_i^d`` (total enclosed volume) constant. Plain mean
curvature flow drops the averaged term and has the closed form
``R(t) = sqrt(R0^2 - 2(d-1)t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import unit_ball_volume

__all__ = [
    "ExtinctionError",
    "OracleTrajectory",
    "oracle_rhs",
    "mcf_rhs",
    "oracle_integrate",
    "mcf_radius",
    "unit_ball_volume",
]


class ExtinctionError(ValueError):
    """A radius is non-positive."""


def _radii(R) -> np.ndarray:
    R = np.atleast_1d(np.asarray(R, dtype=float))
    if R.ndim != 1 or R.size == 0:
        raise ValueError("radii must be a non-empty 1D sequence")
    if np.any(R <= 0):
        raise ExtinctionError(f"non-positive radius in {R}")
    return R


def oracle_rhs(R, d: int = 2) -> np.ndarray:
    """Radius velocities under volume-preserving mean curvature flow."""
    R = _radii(R)
    mean_curv = (d - 1) * np.sum(R ** (d - 2)) / np.sum(R ** (d - 1))
    return -(d - 1) / R + mean_curv


def mcf_rhs(R, d: int = 2) -> np.ndarray:
    """Plain mean curvature flow comparator ``dR/dt = -(d-1)/R``."""
    return -(d - 1) / _radii(R)


def mcf_radius(R0: float, t, d: int = 2):
    """Closed-form radius under plain MCF (``nan`` after extinction)."""
    sq = R0 * R0 - 2.0 * (d - 1) * np.asarray(t, dtype=float)
    return np.where(sq > 0, np.sqrt(np.maximum(sq, 0.0)), np.nan)


@dataclass
class OracleTrajectory:
    t: np.ndarray
    R: np.ndarray  # (len(t), k)
    d: int
    extinct: bool = False
    extinction_time: float | None = None
    law: str = "vpmcf"
    meta: dict = field(default_factory=dict)

    def at(self, t) -> np.ndarray:
        """Radii at time ``t`` by cubic Hermite interpolation of the stored states."""
        t = float(t)
        if t < self.t[0] or t > self.t[-1]:
            raise ValueError(f"time {t} outside the trajectory [{self.t[0]}, {self.t[-1]}]")
        i = int(np.clip(np.searchsorted(self.t, t) - 1, 0, len(self.t) - 2))
        t0, t1 = self.t[i], self.t[i + 1]
        r0, r1 = self.R[i], self.R[i + 1]
        rhs = mcf_rhs if self.law == "mcf" else oracle_rhs
        m0, m1 = rhs(r0, self.d), rhs(r1, self.d)
        hstep = t1 - t0
        s = (t - t0) / hstep
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * r0 + h10 * hstep * m0 + h01 * r1 + h11 * hstep * m1

    def volumes(self) -> np.ndarray:
        return unit_ball_volume(self.d) * np.sum(self.R**self.d, axis=1)


def _rk4(f, y, dt, d):
    k1 = f(y, d)
    k2 = f(y + 0.5 * dt * k1, d)
    k3 = f(y + 0.5 * dt * k2, d)
    k4 = f(y + dt * k3, d)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def oracle_integrate(
    R0,
    T: float,
    d: int = 2,
    law: str = "vpmcf",
    rtol: float = 1e-13,
    dt0: float = 1e-4,
    min_radius: float = 1e-6,
) -> OracleTrajectory:
    """Adaptive classical RK4 (step doubling) for the sphere system.

    Integration stops early, flagged as extinct, when a radius drops below
    ``min_radius`` or the step size collapses near a finite-time singularity.
    """
    if T < 0:
        raise ValueError("final time must be non-negative")
    if law not in ("vpmcf", "mcf"):
        raise ValueError(f"unknown law {law!r}")
    f = oracle_rhs if law == "vpmcf" else mcf_rhs
    y = _radii(R0).copy()
    ts, ys = [0.0], [y.copy()]
    t, dt = 0.0, dt0
    extinct, t_ext = False, None
    while t < T:
        dt = min(dt, T - t)
        try:
            full = _rk4(f, y, dt, d)
            half = _rk4(f, _rk4(f, y, 0.5 * dt, d), 0.5 * dt, d)
        except ExtinctionError:
            full = half = None
        if half is None or np.any(half <= 0) or not np.all(np.isfinite(half)):
            dt *= 0.25
            if dt < 1e-14 * max(1.0, t):
                extinct, t_ext = True, t
                break
            continue
        err = np.max(np.abs(half - full) / np.maximum(np.abs(half), 1e-300)) / 15.0
        if err <= rtol:
            t += dt
            y = half
            ts.append(t)
            ys.append(y.copy())
            if np.min(y) < min_radius:
                extinct, t_ext = True, t
                break
        factor = 0.9 * (rtol / max(err, 1e-300)) ** 0.2
        dt *= min(4.0, max(0.2, factor))
    return OracleTrajectory(np.array(ts), np.array(ys), d, extinct, t_ext, law)
