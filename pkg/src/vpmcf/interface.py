"""Zero level set extraction and sphere fitting on the periodic grid.

Marching squares / marching cubes come from scikit-image; periodicity is
handled by wrap-padding. Closed components are found on a field tiled out to
``[-1/2, 3/2)^d`` and kept when their centroid lies in the fundamental cell,
so each component of diameter below 1/2 is reported exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage import measure

from .torus_field import GridSpec

__all__ = ["Sphere", "interface_measure", "closed_components", "fit_sphere", "fit_spheres"]


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    npoints: int = 0


def _pad(phi: np.ndarray, width: int) -> np.ndarray:
    return np.pad(phi, [(width, width)] * phi.ndim, mode="wrap")


def _zero_crossings_1d(phi: np.ndarray, h: float):
    """Periodic zero crossings of a 1D field as (position, upward) pairs."""
    nxt = np.roll(phi, -1)
    idx = np.nonzero(np.signbit(phi) != np.signbit(nxt))[0]
    out = []
    for i in idx:
        a, b = phi[i], nxt[i]
        frac = a / (a - b) if a != b else 0.5
        out.append(((i + frac) * h % 1.0, bool(b > a)))
    return out


def interface_measure(phi: np.ndarray, grid: GridSpec) -> float:
    """Size of the zero level set: point count (1D), length (2D), area (3D)."""
    phi = grid.check(phi)
    if grid.d == 1:
        return float(len(_zero_crossings_1d(phi, grid.h)))
    if phi.min() >= 0.0 or phi.max() <= 0.0:
        return 0.0
    # one wrapped layer so every cell of the torus is visited exactly once
    padded = np.pad(phi, [(0, 1)] * grid.d, mode="wrap")
    if grid.d == 2:
        total = 0.0
        for c in measure.find_contours(padded, 0.0):
            total += np.sum(np.linalg.norm(np.diff(c, axis=0), axis=1))
        return total * grid.h
    verts, faces, _, _ = measure.marching_cubes(padded, 0.0)
    return float(measure.mesh_surface_area(verts, faces)) * grid.h**2


def closed_components(phi: np.ndarray, grid: GridSpec) -> list[np.ndarray]:
    """Point clouds (torus coordinates) of closed zero level set components."""
    phi = grid.check(phi)
    n, h = grid.n, grid.h
    if grid.d == 1:
        crossings = _zero_crossings_1d(phi, h)
        if len(crossings) < 2:
            return []
        # pair each upward crossing with the next downward one (phi > 0 inside)
        comps = []
        for j, (x, up) in enumerate(crossings):
            if up:
                x2, up2 = crossings[(j + 1) % len(crossings)]
                if not up2:
                    if x2 < x:
                        x2 += 1.0
                    comps.append(np.array([[x], [x2]]))
        return comps
    w = n // 2
    tiled = _pad(phi, w)
    if grid.d == 2:
        pieces = [
            c for c in measure.find_contours(tiled, 0.0) if np.allclose(c[0], c[-1])
        ]
        pieces = [c[:-1] for c in pieces]
    else:
        verts, faces, _, _ = measure.marching_cubes(tiled, 0.0)
        pieces = _mesh_components(verts, faces)
    out = []
    hi = tiled.shape[0] - 1
    for c in pieces:
        if np.any(c <= 0.0) or np.any(c >= hi):
            continue
        pts = (c - w) * h
        centroid = pts.mean(axis=0)
        if np.all(centroid >= 0.0) and np.all(centroid < 1.0):
            out.append(pts)
    return out


def _mesh_components(verts: np.ndarray, faces: np.ndarray) -> list[np.ndarray]:
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    nv = len(verts)
    if nv == 0:
        return []
    rows = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    cols = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    adj = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(nv, nv))
    ncomp, labels = connected_components(adj, directed=False)
    return [verts[labels == i] for i in range(ncomp)]


def fit_sphere(points: np.ndarray) -> Sphere:
    """Algebraic least-squares circle/sphere fit through ``points``."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 1:
        lo, hi = pts[:, 0].min(), pts[:, 0].max()
        return Sphere(np.array([0.5 * (lo + hi)]), 0.5 * (hi - lo), len(pts))
    a = np.hstack([2.0 * pts, np.ones((len(pts), 1))])
    b = np.sum(pts**2, axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    center = sol[:-1]
    radius = float(np.sqrt(sol[-1] + center @ center))
    return Sphere(center % 1.0, radius, len(pts))


def fit_spheres(phi: np.ndarray, grid: GridSpec) -> list[Sphere]:
    """Fit a sphere to each closed interface component, smallest first."""
    return sorted((fit_sphere(c) for c in closed_components(phi, grid)), key=lambda s: s.radius)
