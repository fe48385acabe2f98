"""Periodic scalar fields on the unit cell ``Y = [0, 1]^2`` and their Fourier calculus.

Fields are stored as complex ``(n, n)`` arrays with axis 0 running over
``y1`` and axis 1 over ``y2``.  Fourier coefficients are normalised so that
``f(y) = sum_k c_k exp(2 pi i k.y)``, i.e. ``c = fft2(values) / n**2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import GridMismatch, NonZeroMean, ValidationError

SOLVABILITY_RTOL = 1e-10


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform ``n x n`` grid on the unit torus, nodes ``j / n`` (no duplicated endpoint)."""

    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 8 or self.n % 2:
            raise ValidationError(f"grid size must be an even integer >= 8, got {self.n!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.nodes, self.nodes, indexing="ij")

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)


@dataclass(frozen=True, eq=False)
class PeriodicField:
    grid: PeriodicGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.size != self.grid.n**2:
            raise ValidationError(f"expected {self.grid.n ** 2} samples, got {vals.size}")
        object.__setattr__(self, "values", vals.reshape(self.grid.n, self.grid.n))

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "PeriodicField":
        return cls(grid, np.zeros((grid.n, grid.n), dtype=complex))

    def mean(self) -> complex:
        return complex(self.values.mean())

    def fourier(self) -> np.ndarray:
        return np.fft.fft2(self.values) / self.grid.n**2

    @classmethod
    def from_fourier(cls, grid: PeriodicGrid, coeffs: np.ndarray) -> "PeriodicField":
        return cls(grid, np.fft.ifft2(coeffs * grid.n**2))

    def conj(self) -> "PeriodicField":
        return PeriodicField(self.grid, self.values.conj())

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def _check(self, other: "PeriodicField"):
        if other.grid != self.grid:
            raise GridMismatch(f"grid n={self.grid.n} vs n={other.grid.n}")

    def __add__(self, other):
        if isinstance(other, PeriodicField):
            self._check(other)
            return PeriodicField(self.grid, self.values + other.values)
        return PeriodicField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, PeriodicField):
            self._check(other)
            return PeriodicField(self.grid, self.values - other.values)
        return PeriodicField(self.grid, self.values - other)

    def __neg__(self):
        return PeriodicField(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, PeriodicField):
            self._check(other)
            return PeriodicField(self.grid, self.values * other.values)
        return PeriodicField(self.grid, self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return PeriodicField(self.grid, self.values / scalar)


def sample(grid: PeriodicGrid, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> PeriodicField:
    """Evaluate a 1-periodic function at the grid nodes."""
    y1, y2 = grid.mesh()
    vals = np.broadcast_to(np.asarray(f(y1, y2), dtype=complex), y1.shape)
    return PeriodicField(grid, np.array(vals))


def _derivative_multipliers(grid: PeriodicGrid) -> tuple[np.ndarray, np.ndarray]:
    k = grid.wavenumbers().copy()
    k[grid.n // 2] = 0.0  # Nyquist derivative zeroed
    ik = 2j * np.pi * k
    return ik[:, None], ik[None, :]


def _laplacian_symbol(grid: PeriodicGrid) -> np.ndarray:
    k = grid.wavenumbers()
    return -4.0 * np.pi**2 * (k[:, None] ** 2 + k[None, :] ** 2)


def spectral_gradient(f: PeriodicField) -> tuple[PeriodicField, PeriodicField]:
    c = np.fft.fft2(f.values)
    d1, d2 = _derivative_multipliers(f.grid)
    return (PeriodicField(f.grid, np.fft.ifft2(d1 * c)), PeriodicField(f.grid, np.fft.ifft2(d2 * c)))


def divergence(f1: PeriodicField, f2: PeriodicField) -> PeriodicField:
    f1._check(f2)
    d1, d2 = _derivative_multipliers(f1.grid)
    c = d1 * np.fft.fft2(f1.values) + d2 * np.fft.fft2(f2.values)
    return PeriodicField(f1.grid, np.fft.ifft2(c))


def laplacian(f: PeriodicField) -> PeriodicField:
    return PeriodicField(f.grid, np.fft.ifft2(_laplacian_symbol(f.grid) * np.fft.fft2(f.values)))


def invert_laplacian(rhs: PeriodicField, rtol: float = SOLVABILITY_RTOL) -> PeriodicField:
    """Mean-zero solution ``u`` of ``lap u = rhs``.

    Raises NonZeroMean when ``|mean(rhs)| > rtol * max|rhs|``: the periodic
    problem is only solvable for mean-zero data and we do not project silently.
    """
    mean = abs(rhs.mean())
    if mean > rtol * rhs.max_abs():
        raise NonZeroMean(f"right-hand side has mean {mean:.3e} (max |rhs| = {rhs.max_abs():.3e})")
    sym = _laplacian_symbol(rhs.grid)
    sym[0, 0] = 1.0
    c = np.fft.fft2(rhs.values) / sym
    c[0, 0] = 0.0
    return PeriodicField(rhs.grid, np.fft.ifft2(c))


def l2_inner(f: PeriodicField, g: PeriodicField) -> complex:
    """Cell average of ``f * conj(g)`` (exact trapezoid rule on the torus)."""
    f._check(g)
    return complex(np.vdot(g.values, f.values) / f.grid.n**2)


def l2_norm(f: PeriodicField) -> float:
    return float(np.sqrt(l2_inner(f, f).real))


def trig_interpolate(f: PeriodicField, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` on the tensor grid ``y1 x y2``.

    The Nyquist coefficient is split symmetrically so real fields give real
    interpolants.
    """
    n = f.grid.n
    k = f.grid.wavenumbers()
    c = f.fourier()

    def basis(y):
        e = np.exp(2j * np.pi * np.outer(np.asarray(y, dtype=float), k))
        e[:, n // 2] = np.cos(np.pi * n * np.asarray(y, dtype=float))
        return e

    return basis(y1) @ c @ basis(y2).T


def write_field_csv(f: PeriodicField, path: str | Path, description: str = "") -> None:
    """Write ``y1,y2,re,im`` rows (y2 outer, y1 inner) plus a JSON sidecar."""
    path = Path(path)
    y = f.grid.nodes
    Y2, Y1 = np.meshgrid(y, y, indexing="ij")
    vals = f.values.T  # rows indexed by y2
    table = np.column_stack([Y1.ravel(), Y2.ravel(), vals.real.ravel(), vals.imag.ravel()])
    np.savetxt(path, table, delimiter=",", header="y1,y2,re,im", comments="", fmt="%.17g")
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"n": f.grid.n, "description": description}, indent=2, sort_keys=True) + "\n")


def read_field_csv(path: str | Path) -> PeriodicField:
    path = Path(path)
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        n = int(json.loads(sidecar.read_text())["n"])
    else:
        n = int(round(np.sqrt(len(table))))
    if table.shape != (n * n, 4):
        raise ValidationError(f"{path}: expected {n * n} rows of y1,y2,re,im, got shape {table.shape}")
    vals = (table[:, 2] + 1j * table[:, 3]).reshape(n, n).T
    return PeriodicField(PeriodicGrid(n), vals)
