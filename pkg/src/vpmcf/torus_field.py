"""Discrete calculus on the periodic unit torus ``[0, 1)^d``.

Nodes sit at ``x_i = i * h`` with ``h = 1 / n``. Fields are plain float64
numpy arrays of shape ``(n,) * d`` (row-major, last axis fastest); the
:class:`GridSpec` carries the geometry and the default discretization.

Two operator families are provided:

``central``
    central-difference gradient ``(f(x + h e_j) - f(x - h e_j)) / 2h`` and the
    compact ``(2d + 1)``-point Laplacian.
``spectral``
    exact Fourier multipliers ``2 pi i k_j`` and ``-4 pi^2 |k|^2``.

The bilinear form :meth:`GridSpec.grad_dot` is the pointwise gradient
pairing that is adjoint to each Laplacian (summation by parts holds to
round-off); energies and discrepancies are built from it.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Discretization",
    "GridSpec",
    "ScalarField",
    "pairwise_sum",
    "fft_workers",
    "write_snapshot",
    "read_snapshot",
    "SNAPSHOT_MAGIC",
    "SNAPSHOT_VERSION",
]


class Discretization(str, enum.Enum):
    CENTRAL = "central"
    SPECTRAL = "spectral"

    @classmethod
    def parse(cls, value: "str | Discretization") -> "Discretization":
        if isinstance(value, cls):
            return value
        aliases = {
            "central": cls.CENTRAL,
            "central-2nd-order": cls.CENTRAL,
            "fd": cls.CENTRAL,
            "spectral": cls.SPECTRAL,
            "fourier-spectral": cls.SPECTRAL,
            "fourier": cls.SPECTRAL,
        }
        try:
            return aliases[str(value).strip().lower()]
        except KeyError:
            raise ValueError(f"unknown discretization {value!r}") from None


def fft_workers() -> int:
    """Worker count for the FFT backend (``VPMCF_THREADS`` overrides)."""
    raw = os.environ.get("VPMCF_THREADS")
    if raw is None:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"VPMCF_THREADS must be an integer, got {raw!r}") from None
    return max(workers, 1)


def pairwise_sum(values) -> float:
    """Deterministic tree reduction of all entries of ``values``.

    Adjacent entries of the row-major flattening are added in pairs, level by
    level, so the association order depends only on the array size.
    """
    a = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        if a.size % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0])


def _check_finite(values: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{what} contains non-finite entries")


@dataclass(frozen=True)
class GridSpec:
    """Uniform node-centred grid on the unit torus.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 to 3. (d = 1 is a debugging dimension.)
    n : int
        Nodes per axis, at least 8.
    disc : Discretization
        Default operator family. Spectral grids need ``n`` a power of two.
    """

    d: int
    n: int
    disc: Discretization = Discretization.SPECTRAL

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if int(self.n) != self.n or self.n < 8:
            raise ValueError(f"need at least 8 nodes per axis, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "disc", Discretization.parse(self.disc))
        if self.disc is Discretization.SPECTRAL and self.n & (self.n - 1):
            raise ValueError(f"spectral grids need a power-of-two n, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    def with_disc(self, disc) -> "GridSpec":
        return GridSpec(self.d, self.n, Discretization.parse(disc))

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates as a tuple of ``d`` broadcastable arrays."""
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij", sparse=True))

    def points(self) -> np.ndarray:
        """All node coordinates as an ``(n^d, d)`` array, row-major order."""
        x = np.arange(self.n) * self.h
        mesh = np.meshgrid(*([x] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def displacement(self, y) -> tuple[np.ndarray, ...]:
        """Minimum-image displacement ``x - y`` per axis, each in ``[-1/2, 1/2)``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if y.shape != (self.d,):
            raise ValueError(f"point must have {self.d} coordinates")
        return tuple(((c - yj + 0.5) % 1.0) - 0.5 for c, yj in zip(self.coords(), y))

    def distance(self, y) -> np.ndarray:
        """Periodic (minimum-image) distance from every node to ``y``."""
        disp = self.displacement(y)
        sq = sum(c**2 for c in disp)
        return np.sqrt(np.broadcast_to(sq, self.shape))

    # -- validation ---------------------------------------------------------

    def check(self, f, what: str = "field") -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != self.shape:
            raise ValueError(f"{what} has shape {f.shape}, grid expects {self.shape}")
        _check_finite(f, what)
        return f

    # -- integrals ----------------------------------------------------------

    def integrate(self, f) -> float:
        """``h^d * sum(f)`` by deterministic pairwise reduction."""
        f = self.check(f)
        return self.cell_volume * pairwise_sum(f)

    # -- Fourier machinery --------------------------------------------------

    @cached_property
    def _wavenumbers(self) -> tuple[np.ndarray, ...]:
        # integer wavenumbers laid out for rfftn (last axis halved)
        full = np.fft.fftfreq(self.n, d=1.0 / self.n)
        half = np.fft.rfftfreq(self.n, d=1.0 / self.n)
        axes = [full] * (self.d - 1) + [half]
        out = []
        for j, k in enumerate(axes):
            shape = [1] * self.d
            shape[j] = k.size
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def _grad_multipliers(self) -> tuple[np.ndarray, ...]:
        mults = []
        for k in self._wavenumbers:
            m = 2j * np.pi * k
            # the Nyquist mode has zero derivative at the nodes
            m = np.where(np.abs(k) == self.n // 2, 0.0, m)
            mults.append(m)
        return tuple(mults)

    def laplacian_symbol(self, disc=None) -> np.ndarray:
        """Eigenvalues of the Laplacian on the rfft mode layout."""
        disc = self.disc if disc is None else Discretization.parse(disc)
        return self._laplacian_symbols[disc]

    @cached_property
    def _laplacian_symbols(self) -> dict:
        spec = sum(-4.0 * np.pi**2 * k**2 for k in self._wavenumbers)
        fd = sum(
            -(4.0 / self.h**2) * np.sin(np.pi * k * self.h) ** 2
            for k in self._wavenumbers
        )
        return {Discretization.SPECTRAL: spec, Discretization.CENTRAL: fd}

    def rfft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, workers=fft_workers())

    def irfft(self, fhat: np.ndarray) -> np.ndarray:
        return sfft.irfftn(fhat, s=self.shape, workers=fft_workers())

    # -- differential operators ----------------------------------------------

    def gradient(self, f, disc=None) -> np.ndarray:
        """Gradient as an array of shape ``(d,) + grid.shape``."""
        f = self.check(f)
        disc = self.disc if disc is None else Discretization.parse(disc)
        if disc is Discretization.CENTRAL:
            return np.stack(
                [
                    (np.roll(f, -1, axis=j) - np.roll(f, 1, axis=j)) / (2.0 * self.h)
                    for j in range(self.d)
                ]
            )
        fhat = self.rfft(f)
        return np.stack([self.irfft(m * fhat) for m in self._grad_multipliers])

    def laplacian(self, f, disc=None) -> np.ndarray:
        f = self.check(f)
        disc = self.disc if disc is None else Discretization.parse(disc)
        if disc is Discretization.CENTRAL:
            out = -2.0 * self.d * f
            for j in range(self.d):
                out = out + np.roll(f, -1, axis=j) + np.roll(f, 1, axis=j)
            return out / self.h**2
        return self.irfft(self._laplacian_symbols[disc] * self.rfft(f))

    def grad_dot(self, u, v=None, disc=None) -> np.ndarray:
        """Pointwise gradient pairing ``grad u . grad v`` adjoint to the Laplacian.

        Spectral: the product of exact spectral gradients. Central: the mean of
        the forward- and backward-difference products, which makes
        ``integrate(u * laplacian(v)) == -integrate(grad_dot(u, v))`` hold to
        round-off for the compact stencil.
        """
        disc = self.disc if disc is None else Discretization.parse(disc)
        u = self.check(u)
        same = v is None
        v = u if same else self.check(v)
        if disc is Discretization.SPECTRAL:
            gu = self.gradient(u, disc)
            gv = gu if same else self.gradient(v, disc)
            return np.sum(gu * gv, axis=0)
        out = np.zeros(self.shape)
        for j in range(self.d):
            du = (np.roll(u, -1, axis=j) - u) / self.h
            dv = du if same else (np.roll(v, -1, axis=j) - v) / self.h
            prod = du * dv
            # forward product at x plus backward product at x (= forward at x - h)
            out += 0.5 * (prod + np.roll(prod, 1, axis=j))
        return out

    def grad_norm_sq(self, f, disc=None) -> np.ndarray:
        return self.grad_dot(f, None, disc)

    def solve_helmholtz(self, rhs, coeff: float, disc=None) -> np.ndarray:
        """Solve ``(I - coeff * Laplacian) u = rhs`` in Fourier space."""
        rhs = self.check(rhs, "right-hand side")
        symbol = self.laplacian_symbol(disc)
        return self.irfft(self.rfft(rhs) / (1.0 - coeff * symbol))

    def ball_sums(self, density, radius: float) -> np.ndarray:
        """``h^d * sum`` of ``density`` over every periodic node ball ``|x - c| < R``.

        Returned as a field indexed by the centre node ``c``. Uses a circular
        convolution with the node-mask of the ball, so the mask convention is
        identical to summing over masked nodes directly.
        """
        density = self.check(density, "density")
        mask = (self.distance(np.zeros(self.d)) < radius).astype(float)
        # mask is symmetric under x -> -x, so correlation equals convolution
        conv = sfft.irfftn(
            sfft.rfftn(density, workers=fft_workers()) * sfft.rfftn(mask, workers=fft_workers()),
            s=self.shape,
            workers=fft_workers(),
        )
        return self.cell_volume * conv


@dataclass
class ScalarField:
    """Nodal field on a grid together with the snapshot metadata."""

    grid: GridSpec
    values: np.ndarray
    eps: float = 0.0
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = self.grid.check(self.values)


SNAPSHOT_MAGIC = b"VPMF"
SNAPSHOT_VERSION = 1
# magic, version, d, n, eps, t, then 8 reserved bytes to pad the header to 40
_HEADER = struct.Struct("<4sIIIdd8x")
assert _HEADER.size == 40


def write_snapshot(path, fld: ScalarField) -> Path:
    """Write ``fld`` in the binary snapshot format (40-byte header + f64 data)."""
    path = Path(path)
    header = _HEADER.pack(
        SNAPSHOT_MAGIC, SNAPSHOT_VERSION, fld.grid.d, fld.grid.n, float(fld.eps), float(fld.t)
    )
    data = np.ascontiguousarray(fld.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))
    return path


def read_snapshot(path, disc=Discretization.SPECTRAL) -> ScalarField:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, version, d, n, eps, t = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    count = n**d
    if len(raw) != _HEADER.size + 8 * count:
        raise ValueError(f"{path}: expected {count} values")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=count)
    grid = GridSpec(d, n, disc if not (n & (n - 1)) else Discretization.CENTRAL)
    return ScalarField(grid, values.reshape(grid.shape).astype(np.float64), eps=eps, t=t)
