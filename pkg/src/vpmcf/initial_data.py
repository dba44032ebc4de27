"""Well-prepared initial fields ``tanh(rbar / eps)`` from geometric shapes.

``rbar`` is a saturated signed distance to the shape boundary (positive
inside). Saturation ``K eps tanh(r / (K eps))`` keeps the zero set, has
gradient norm at most that of ``r`` and curvature of order ``1 / (K eps)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .diagnostics import density_scan, discrepancy_field
from .potential import eval_k, eval_W
from .torus_field import GridSpec

__all__ = [
    "Ball",
    "UnionOfBalls",
    "Ellipse",
    "Implicit",
    "ShapeSpec",
    "ClearanceError",
    "ResolutionError",
    "SignedDistanceField",
    "WellPreparednessReport",
    "signed_distance",
    "smooth_saturate",
    "make_initial",
    "check_well_prepared",
    "ellipse_distance",
    "DEFAULT_K",
    "OMEGA_WARNING",
]

DEFAULT_K = 5.0
#: phase-volume margin below which the report carries a warning
OMEGA_WARNING = 0.01


class ClearanceError(ValueError):
    """Shape too close to the periodic seam, or overlapping components."""


class ResolutionError(ValueError):
    """Interface width not resolved by the grid (resolution guard eps >= 3h)."""


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class UnionOfBalls:
    balls: tuple

    def __post_init__(self):
        object.__setattr__(self, "balls", tuple(self.balls))
        if not self.balls:
            raise ValueError("union needs at least one ball")

    def bounds(self):
        lo = np.min([b.bounds()[0] for b in self.balls], axis=0)
        hi = np.max([b.bounds()[1] for b in self.balls], axis=0)
        return lo, hi


@dataclass(frozen=True)
class Ellipse:
    """Axis-aligned ellipse (d = 2) or ellipsoid (d = 3)."""

    center: tuple
    semi_axes: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(a) for a in self.semi_axes))
        if len(self.center) != len(self.semi_axes):
            raise ValueError("centre and semi-axes differ in dimension")
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")

    def bounds(self):
        c, a = np.array(self.center), np.array(self.semi_axes)
        return c - a, c + a


@dataclass(frozen=True)
class Implicit:
    """Shape given by a sampled signed distance (positive inside).

    ``values`` is either an array on the target grid or a callable taking the
    tuple of coordinate arrays from :meth:`GridSpec.coords`.
    """

    values: Union[np.ndarray, Callable] = field(compare=False)

    def bounds(self):
        return None


ShapeSpec = Union[Ball, UnionOfBalls, Ellipse, Implicit]


@dataclass
class SignedDistanceField:
    values: np.ndarray
    grid: GridSpec
    band: float | None = None  # saturation level K*eps, None if unsaturated


def _check_containment(shape, d: int, clearance: float) -> None:
    b = shape.bounds()
    if b is None:
        return
    lo, hi = b
    if lo.shape != (d,):
        raise ValueError(f"shape is {lo.size}-dimensional, grid is {d}-dimensional")
    if np.any(lo <= clearance) or np.any(hi >= 1.0 - clearance):
        raise ClearanceError(
            f"shape bounding box [{lo}, {hi}] violates clearance {clearance:g} from the seam"
        )


def _check_disjoint(balls: Sequence[Ball]) -> None:
    for a, b in itertools.combinations(balls, 2):
        disp = (np.array(a.center) - np.array(b.center) + 0.5) % 1.0 - 0.5
        if np.linalg.norm(disp) <= a.radius + b.radius:
            raise ClearanceError(f"balls {a} and {b} overlap")


def _image_offsets(d: int):
    return itertools.product((-1.0, 0.0, 1.0), repeat=d)


def _ball_sd(grid: GridSpec, ball: Ball) -> np.ndarray:
    coords = grid.coords()
    out = np.full(grid.shape, -np.inf)
    for off in _image_offsets(grid.d):
        sq = sum((x - c - o) ** 2 for x, c, o in zip(coords, ball.center, off))
        out = np.maximum(out, ball.radius - np.sqrt(sq))
    return out


def _ellipsoid_root(y: np.ndarray, e: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Root ``t`` of ``sum (e_i y_i / (t + e_i^2))^2 = 1`` for all-positive ``y``.

    The function is convex and decreasing; Newton from the left end of the
    bracket increases monotonically, and bisection guards each step.
    """
    e2 = e * e
    lo = -e2[-1] + e[-1] * y[:, -1]
    hi = -e2[-1] + np.sqrt(np.sum((e * y) ** 2, axis=1))
    t = lo.copy()
    for _ in range(200):
        ratio = e * y / (t[:, None] + e2)
        f = np.sum(ratio**2, axis=1) - 1.0
        fp = -2.0 * np.sum(ratio**2 / (t[:, None] + e2), axis=1)
        lo = np.where(f > 0, t, lo)
        hi = np.where(f <= 0, t, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = t - f / fp
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        new = np.where(bad, 0.5 * (lo + hi), step)
        if np.all(np.abs(new - t) <= tol * np.maximum(1.0, np.abs(t)) * e2[0]):
            t = new
            break
        t = new
    return t


def _ellipsoid_distance(y: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Unsigned distance from first-orthant points ``y`` to the ellipsoid ``e``.

    ``e`` must be sorted in decreasing order. Points on coordinate planes are
    reduced to lower-dimensional problems.
    """
    m = e.size
    if m == 1:
        return np.abs(y[:, 0] - e[0])
    out = np.empty(len(y))
    last_pos = y[:, -1] > 0
    lead_pos = np.all(y[:, :-1] > 0, axis=1)

    generic = last_pos & lead_pos
    if np.any(generic):
        yg = y[generic]
        t = _ellipsoid_root(yg, e)
        x = e * e * yg / (t[:, None] + e * e)
        out[generic] = np.linalg.norm(x - yg, axis=1)

    partial = last_pos & ~lead_pos
    if np.any(partial):
        zeros = y[partial, :-1] == 0
        rows = np.nonzero(partial)[0]
        for pattern in np.unique(zeros, axis=0):
            sel = rows[np.all(zeros == pattern, axis=1)]
            keep = np.append(~pattern, True)
            out[sel] = _ellipsoid_distance(y[sel][:, keep], e[keep])

    flat = ~last_pos
    if np.any(flat):
        rows = np.nonzero(flat)[0]
        yf = y[rows, :-1]
        ef = e[:-1]
        denom = ef * ef - e[-1] ** 2
        numer = ef * yf
        with np.errstate(divide="ignore", invalid="ignore"):
            xde = np.where(denom > 0, numer / denom, np.inf)
        inside = np.all(numer < denom, axis=1)
        discr = 1.0 - np.sum(np.where(np.isfinite(xde), xde, 0.0) ** 2, axis=1)
        evolute = inside & (discr > 0)
        res = np.empty(len(rows))
        if np.any(evolute):
            x = ef * xde[evolute]
            xm = e[-1] * np.sqrt(discr[evolute])
            res[evolute] = np.sqrt(np.sum((x - yf[evolute]) ** 2, axis=1) + xm**2)
        if np.any(~evolute):
            res[~evolute] = _ellipsoid_distance(yf[~evolute], ef)
        out[rows] = res
    return out


def ellipse_distance(points: np.ndarray, center, semi_axes) -> np.ndarray:
    """Signed distance (positive inside) from ``points`` to an axis-aligned ellipsoid."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = np.asarray(center, dtype=float)
    a = np.asarray(semi_axes, dtype=float)
    y = np.abs(pts - c)
    order = np.argsort(-a, kind="stable")
    dist = _ellipsoid_distance(y[:, order], a[order])
    inside = np.sum((y / a) ** 2, axis=1) < 1.0
    return np.where(inside, dist, -dist)


def _ellipse_sd(grid: GridSpec, ell: Ellipse) -> np.ndarray:
    pts = grid.points()
    out = np.full(grid.size, -np.inf)
    for off in _image_offsets(grid.d):
        out = np.maximum(out, ellipse_distance(pts - np.array(off), ell.center, ell.semi_axes))
    return out.reshape(grid.shape)


def signed_distance(shape: ShapeSpec, grid: GridSpec, clearance: float = 0.0) -> SignedDistanceField:
    """Signed distance to the shape boundary, positive inside, periodic images included.

    For disjoint components (and their periodic copies) the signed distance
    is the pointwise maximum of the per-component signed distances.
    """
    if isinstance(shape, Implicit):
        vals = shape.values(grid.coords()) if callable(shape.values) else shape.values
        vals = np.broadcast_to(np.asarray(vals, dtype=float), grid.shape).copy()
        return SignedDistanceField(grid.check(vals, "implicit shape"), grid)
    _check_containment(shape, grid.d, clearance)
    if isinstance(shape, Ball):
        vals = _ball_sd(grid, shape)
    elif isinstance(shape, UnionOfBalls):
        _check_disjoint(shape.balls)
        vals = np.max([_ball_sd(grid, b) for b in shape.balls], axis=0)
    elif isinstance(shape, Ellipse):
        if grid.d == 1:
            vals = _ball_sd(grid, Ball(shape.center, shape.semi_axes[0]))
        else:
            vals = _ellipse_sd(grid, shape)
    else:
        raise TypeError(f"unsupported shape {shape!r}")
    return SignedDistanceField(vals, grid)


def smooth_saturate(r: SignedDistanceField, eps: float, K: float = DEFAULT_K) -> SignedDistanceField:
    """``K eps tanh(r / (K eps))``: odd, same zero set, bounded by ``K eps``."""
    if K < 5:
        raise ValueError(f"saturation factor K must be at least 5, got {K}")
    band = K * eps
    return SignedDistanceField(band * np.tanh(r.values / band), r.grid, band)


def make_initial(shape: ShapeSpec, eps: float, grid: GridSpec, K: float = DEFAULT_K) -> np.ndarray:
    """Nodal initial field ``tanh(rbar / eps)``.

    Raises :class:`ResolutionError` when ``eps < 3h`` and
    :class:`ClearanceError` when the shape comes within ``4 eps`` of the
    periodic seam.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if eps < 3.0 * grid.h * (1.0 - 1e-12):
        raise ResolutionError(
            f"resolution guard: eps = {eps:g} is below 3h = {3 * grid.h:g}; interface unresolved"
        )
    r = signed_distance(shape, grid, clearance=4.0 * eps)
    rbar = smooth_saturate(r, eps, K)
    return np.tanh(rbar.values / eps)


@dataclass
class WellPreparednessReport:
    max_discrepancy: float
    max_relative_discrepancy: float
    density_ratio: float
    omega: float
    max_grad_rbar: float
    fatal: bool = False
    discrepancy_violation: bool = False
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.fatal and not self.discrepancy_violation and math.isfinite(self.density_ratio)


def dyadic_radii(grid: GridSpec) -> list[float]:
    """Radii ``2h, 4h, ...`` strictly below 1/4."""
    out, r = [], 2.0 * grid.h
    while r < 0.25 - 1e-12:
        out.append(r)
        r *= 2.0
    return out


def check_well_prepared(
    phi0, eps: float, grid: GridSpec, disc="central", centers="all", rel_tol: float = 1e-10
) -> WellPreparednessReport:
    """Measure the initial-data hypotheses on a nodal field.

    Reports the discrepancy maximum (absolute and relative to
    ``W / eps + 1``), the largest density ratio over dyadic radii, the
    phase-volume margin ``omega = 2/3 - |integral k(phi0)|`` and the largest
    ``|grad rbar|`` recovered by ``rbar = eps atanh(phi0)`` inside the band
    ``|phi0| <= 0.99``.

    The default central stencil is local: kinks of the distance function far
    from the interface cannot leak into the discrepancy, as they do through
    the spectral gradient.
    """
    phi0 = grid.check(phi0)
    xi = discrepancy_field(phi0, eps, grid, disc)
    rel = xi / (eval_W(phi0) / eps + 1.0)
    scan = density_scan(phi0, eps, grid, dyadic_radii(grid), centers=centers, disc=disc)
    omega = 2.0 / 3.0 - abs(grid.integrate(eval_k(phi0)))
    band = np.abs(phi0) <= 0.99
    if np.any(band):
        rbar = eps * np.arctanh(np.clip(phi0, -1.0 + 1e-16, 1.0 - 1e-16))
        g = grid.gradient(rbar, disc)
        grad_rbar = float(np.sqrt(np.max(np.sum(g * g, axis=0)[band])))
    else:
        grad_rbar = 0.0
    report = WellPreparednessReport(
        max_discrepancy=float(xi.max()),
        max_relative_discrepancy=float(rel.max()),
        density_ratio=scan.sup_ratio,
        omega=omega,
        max_grad_rbar=grad_rbar,
    )
    if omega <= 1e-12:
        report.fatal = True
        report.warnings.append("phase-volume margin omega <= 0: multiplier estimate degenerates")
    elif omega <= OMEGA_WARNING:
        report.warnings.append(f"small phase-volume margin omega = {omega:.3g}")
    if report.max_relative_discrepancy > rel_tol:
        report.discrepancy_violation = True
        report.warnings.append(
            f"positive discrepancy {report.max_discrepancy:.3g} exceeds tolerance"
        )
    return report
