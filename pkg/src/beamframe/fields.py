"""Complex fields sampled on uniform rectangular grids, plus binary/CSV IO.

A :class:`Field2D` holds samples ``values[i, k] = u(x0 + i*dx, y0 + k*dy)``.
The first axis is the ``x1`` coordinate; for boundary data it plays the role
of time.  All spectral helpers use the convention
``fhat(xi) = integral f(x) exp(-2*pi*i*x.xi) dx``, so frequencies are in
cycles per unit length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np


class ShapeError(ValueError):
    """Grids or field shapes do not match."""


@dataclass
class Grid2D:
    """Uniform rectangular grid (no samples, geometry only)."""

    nx: int
    ny: int
    x0: float
    y0: float
    dx: float
    dy: float

    def __post_init__(self) -> None:
        if self.nx < 2 or self.ny < 2:
            raise ShapeError("grid needs at least 2 points per axis")
        if self.dx <= 0 or self.dy <= 0:
            raise ShapeError("grid spacings must be positive")

    @classmethod
    def from_bounds(cls, x_lo, x_hi, y_lo, y_hi, nx, ny) -> "Grid2D":
        return cls(nx, ny, x_lo, y_lo, (x_hi - x_lo) / (nx - 1), (y_hi - y_lo) / (ny - 1))

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def x_axis(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    def y_axis(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_axis(), self.y_axis(), indexing="ij")

    def points(self) -> np.ndarray:
        """All grid points as an (nx, ny, 2) array."""
        X, Y = self.meshgrid()
        return np.stack([X, Y], axis=-1)

    def freq_axes(self) -> tuple[np.ndarray, np.ndarray]:
        """FFT frequency axes in cycles per unit (numpy fftfreq ordering)."""
        return (np.fft.fftfreq(self.nx, self.dx), np.fft.fftfreq(self.ny, self.dy))

    def freq_phase(self, sign: int) -> np.ndarray:
        """Origin phase ramp exp(sign * 2 pi i (x0 xi + y0 eta)) on the
        frequency grid; relates the sample DFT to the continuum transform."""
        fx, fy = self.freq_axes()
        return np.exp(sign * 2j * np.pi * (self.x0 * fx[:, None] + self.y0 * fy[None, :]))

    def same_geometry(self, other: "Grid2D", tol: float = 1e-12) -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and abs(self.x0 - other.x0) <= tol
            and abs(self.y0 - other.y0) <= tol
            and abs(self.dx - other.dx) <= tol
            and abs(self.dy - other.dy) <= tol
        )


@dataclass
class Field2D:
    """Complex samples of u(t, .) on a :class:`Grid2D` with a time stamp."""

    grid: Grid2D
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.nx, self.grid.ny):
            raise ShapeError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.nx}, {self.grid.ny})"
            )

    @classmethod
    def zeros(cls, grid: Grid2D, t: float = 0.0) -> "Field2D":
        return cls(grid, np.zeros((grid.nx, grid.ny), dtype=complex), t)

    @classmethod
    def from_function(cls, grid: Grid2D, fn, t: float = 0.0) -> "Field2D":
        """Sample ``fn(points)`` where points has shape (nx, ny, 2)."""
        return cls(grid, np.asarray(fn(grid.points()), dtype=complex), t)

    def copy(self) -> "Field2D":
        return replace(self, values=self.values.copy())

    def l2_norm(self) -> float:
        """Trapezoid-weight L2 norm (plain cell-area weights)."""
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.cell_area))

    def fft(self) -> np.ndarray:
        """Continuum-normalized Fourier transform samples on freq_axes.

        The DFT of samples anchored at (x0, y0) carries an origin phase ramp
        relative to the continuum transform; it is removed here.
        """
        return np.fft.fft2(self.values) * self.grid.cell_area * self.grid.freq_phase(-1)

    @classmethod
    def from_spectrum(cls, grid: Grid2D, fhat: np.ndarray, t: float = 0.0) -> "Field2D":
        """Inverse of :meth:`fft`: samples from continuum-transform values."""
        vals = np.fft.ifft2(fhat * grid.freq_phase(+1)) / grid.cell_area
        return cls(grid, vals, t)

    def sobolev_norm(self, s: float) -> float:
        """Inhomogeneous H^s norm computed spectrally (assumes field decays
        inside the domain; frequencies in cycles are scaled by 2*pi)."""
        fx, fy = self.grid.freq_axes()
        w = 1.0 + (2.0 * np.pi) ** 2 * (fx[:, None] ** 2 + fy[None, :] ** 2)
        fhat2 = np.abs(self.fft()) ** 2
        dxi = 1.0 / (self.grid.nx * self.grid.dx) / (self.grid.ny * self.grid.dy)
        return float(np.sqrt(np.sum(w**s * fhat2) * dxi))

    def __add__(self, other: "Field2D") -> "Field2D":
        self._check(other)
        return Field2D(self.grid, self.values + other.values, self.t)

    def __sub__(self, other: "Field2D") -> "Field2D":
        self._check(other)
        return Field2D(self.grid, self.values - other.values, self.t)

    def __mul__(self, scalar: complex) -> "Field2D":
        return Field2D(self.grid, self.values * scalar, self.t)

    __rmul__ = __mul__

    def _check(self, other: "Field2D") -> None:
        if not self.grid.same_geometry(other.grid):
            raise ShapeError("field grids do not match")


# Binary field format: little-endian header {u32 nx, u32 ny, f64 x0, y0, dx,
# dy, t} followed by nx*ny (f64 re, f64 im) pairs, row-major in the x index.
_HEADER = struct.Struct("<II5d")


def write_field(path, fld: Field2D) -> None:
    with open(path, "wb") as fh:
        g = fld.grid
        fh.write(_HEADER.pack(g.nx, g.ny, g.x0, g.y0, g.dx, g.dy, fld.t))
        out = np.empty((g.nx * g.ny, 2), dtype="<f8")
        out[:, 0] = fld.values.real.reshape(-1)
        out[:, 1] = fld.values.imag.reshape(-1)
        fh.write(out.tobytes())


def read_field(path) -> Field2D:
    with open(path, "rb") as fh:
        nx, ny, x0, y0, dx, dy, t = _HEADER.unpack(fh.read(_HEADER.size))
        raw = np.frombuffer(fh.read(nx * ny * 16), dtype="<f8").reshape(nx * ny, 2)
    values = (raw[:, 0] + 1j * raw[:, 1]).reshape(nx, ny)
    return Field2D(Grid2D(nx, ny, x0, y0, dx, dy), values, t)


def write_field_csv(path, fld: Field2D) -> None:
    """Plot-friendly CSV export: x1,x2,re,im rows."""
    X, Y = fld.grid.meshgrid()
    data = np.column_stack(
        [X.reshape(-1), Y.reshape(-1), fld.values.real.reshape(-1), fld.values.imag.reshape(-1)]
    )
    np.savetxt(path, data, delimiter=",", header="x1,x2,re,im", comments="")
