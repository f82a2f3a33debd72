"""Smooth velocity fields c(x) and the wave Hamiltonians H(x, p) = +/- c|p|.

Three concrete kinds are supported: a constant field, a Gaussian low-velocity
lens, and a tabulated field with bicubic interpolation.  The first two have
analytic derivatives through third order; the tabulated kind differentiates
the spline and estimates third derivatives by finite differences (flagged as
reduced accuracy through :attr:`VelocityModel.exact_third_derivs`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np


class OutOfDomainError(ValueError):
    """Tabulated velocity queried outside its grid."""


class DegenerateMomentumError(ValueError):
    """Hamiltonian evaluated at p = 0."""


Mode = Literal["+", "-"]


def mode_sign(mode: Mode) -> float:
    if mode == "+":
        return 1.0
    if mode == "-":
        return -1.0
    raise ValueError(f"mode must be '+' or '-', got {mode!r}")


@dataclass
class HamiltonianDerivs:
    """H and its first/second derivative blocks at one phase-space point.

    D = dx dx H, B = dx dp H, X = dp dp H, all evaluated along a ray.
    """

    H: float
    dxH: np.ndarray
    dpH: np.ndarray
    D: np.ndarray
    B: np.ndarray
    X: np.ndarray


class VelocityModel:
    """Base class; subclasses implement speed and its spatial derivatives.

    All operations are pure and instances are immutable after construction,
    so a model may be shared freely between workers.
    """

    kind: str = "abstract"
    #: True when third derivatives are analytic, False for spline estimates.
    exact_third_derivs: bool = True

    @property
    def c_min(self) -> float:
        raise NotImplementedError

    def speed(self, x: np.ndarray) -> np.ndarray:
        """c at points x with shape (..., d)."""
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def third_derivative(self, x: np.ndarray) -> np.ndarray:
        """Symmetric (..., d, d, d) tensor of third partials of c."""
        raise NotImplementedError

    # -- Hamiltonians -----------------------------------------------------

    def hamiltonian(self, mode: Mode, x: np.ndarray, p: np.ndarray) -> float:
        """H(x, p) = sign * c(x) |p|."""
        p = np.asarray(p, dtype=float)
        nrm = np.linalg.norm(p, axis=-1)
        if np.any(nrm == 0.0):
            raise DegenerateMomentumError("hamiltonian undefined at p = 0")
        return mode_sign(mode) * self.speed(x) * nrm

    def hamiltonian_derivs(self, mode: Mode, x, p) -> HamiltonianDerivs:
        """All derivative blocks of H at a single (x, p)."""
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        nrm = float(np.linalg.norm(p))
        if nrm == 0.0:
            raise DegenerateMomentumError("hamiltonian derivatives undefined at p = 0")
        s = mode_sign(mode)
        phat = p / nrm
        c = float(self.speed(x))
        g = self.gradient(x)
        hess = self.hessian(x)
        d = p.shape[-1]
        proj = np.eye(d) - np.outer(phat, phat)
        return HamiltonianDerivs(
            H=s * c * nrm,
            dxH=s * nrm * g,
            dpH=s * c * phat,
            D=s * nrm * hess,
            B=s * np.outer(g, phat),
            X=s * (c / nrm) * proj,
        )

    def flow_rhs(self, mode: Mode, x: np.ndarray, p: np.ndarray):
        """(xdot, pdot) of the Hamiltonian flow, valid for array input."""
        p = np.asarray(p, dtype=float)
        x = np.asarray(x, dtype=float)
        nrm = np.linalg.norm(p, axis=-1, keepdims=True)
        s = mode_sign(mode)
        c = np.asarray(self.speed(x))[..., None]
        g = self.gradient(x)
        return s * c * p / nrm, -s * nrm * g

    def derivative_bounds(self, x_lo, x_hi, samples: int = 64) -> dict[str, float]:
        """Measured sup norms of c, grad c, hess c over a sample box.

        The theory assumes such bounds exist but never quantifies them, so
        they are reported as diagnostics rather than asserted.
        """
        xs = np.linspace(x_lo[0], x_hi[0], samples)
        ys = np.linspace(x_lo[1], x_hi[1], samples)
        pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        c = self.speed(pts)
        g = self.gradient(pts)
        h = self.hessian(pts)
        return {
            "c_max": float(np.max(c)),
            "c_min_sampled": float(np.min(c)),
            "grad_sup": float(np.max(np.linalg.norm(g, axis=-1))),
            "hess_sup": float(np.max(np.linalg.norm(h, axis=(-2, -1)))),
        }


class ConstantVelocity(VelocityModel):
    """c(x) = c0."""

    kind = "constant"

    def __init__(self, c0: float):
        if c0 <= 0:
            raise ValueError("speed must be positive")
        self.c0 = float(c0)

    @property
    def c_min(self) -> float:
        return self.c0

    def speed(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.c0)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return np.zeros(x.shape[:-1] + (d, d))

    def third_derivative(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        return np.zeros(x.shape[:-1] + (d, d, d))


class GaussianLens(VelocityModel):
    """c(x) = base - depth * exp(-|x - center|^2 / width).

    ``width`` has units of length squared.  Requires depth < base so the
    field stays positive; the minimum base - depth is attained at the center.
    """

    kind = "gaussian_lens"

    def __init__(self, base: float, depth: float, center, width: float):
        if base <= 0 or width <= 0:
            raise ValueError("base speed and width must be positive")
        if not 0 <= depth < base:
            raise ValueError("need 0 <= depth < base for a positive field")
        self.base = float(base)
        self.depth = float(depth)
        self.center = np.asarray(center, dtype=float)
        self.width = float(width)

    @property
    def c_min(self) -> float:
        return self.base - self.depth

    def _bump(self, x):
        u = np.asarray(x, dtype=float) - self.center
        return u, np.exp(-np.sum(u * u, axis=-1) / self.width)

    def speed(self, x):
        _, e = self._bump(x)
        return self.base - self.depth * e

    def gradient(self, x):
        u, e = self._bump(x)
        return self.depth * e[..., None] * (2.0 / self.width) * u

    def hessian(self, x):
        u, e = self._bump(x)
        d = u.shape[-1]
        eye = np.eye(d)
        outer = u[..., :, None] * u[..., None, :]
        return (
            self.depth
            * (2.0 / self.width)
            * e[..., None, None]
            * (eye - (2.0 / self.width) * outer)
        )

    def third_derivative(self, x):
        u, e = self._bump(x)
        d = u.shape[-1]
        eye = np.eye(d)
        a = 2.0 / self.width
        sym = (
            eye[..., :, :, None] * u[..., None, None, :]
            + eye[..., :, None, :] * u[..., None, :, None]
            + eye[..., None, :, :] * u[..., :, None, None]
        )
        triple = u[..., :, None, None] * u[..., None, :, None] * u[..., None, None, :]
        return self.depth * a * e[..., None, None, None] * (-a * sym + a * a * triple)


class TabulatedVelocity(VelocityModel):
    """Bicubic interpolation of gridded speed samples.

    The spline is C^1 with piecewise-quadratic second derivatives, so second
    derivatives are spline-exact but only approximately those of the
    underlying field, and third derivatives are finite-difference estimates.
    c_min is the sampled minimum scaled by 0.99 as a safety margin, since no
    analytic bound exists for an interpolant.
    """

    kind = "table"
    exact_third_derivs = False

    def __init__(self, x_axis, y_axis, samples):
        from scipy.interpolate import RectBivariateSpline

        samples = np.asarray(samples, dtype=float)
        if np.any(samples <= 0):
            raise ValueError("tabulated speeds must be positive")
        self.x_axis = np.asarray(x_axis, dtype=float)
        self.y_axis = np.asarray(y_axis, dtype=float)
        self._spline = RectBivariateSpline(self.x_axis, self.y_axis, samples, kx=3, ky=3)
        self._c_min = 0.99 * float(samples.min())
        self._fd_step = 1e-4 * max(
            self.x_axis[-1] - self.x_axis[0], self.y_axis[-1] - self.y_axis[0]
        )

    @classmethod
    def from_csv(cls, path) -> "TabulatedVelocity":
        """Load `nx,ny,x0,y0,dx,dy` header plus row-major samples (one grid
        row per line)."""
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            nx, ny = int(header[0]), int(header[1])
            x0, y0, dx, dy = (float(v) for v in header[2:6])
            samples = np.loadtxt(fh, delimiter=",", ndmin=2)
        if samples.shape != (nx, ny):
            raise ValueError(f"expected {nx}x{ny} samples, got {samples.shape}")
        return cls(x0 + dx * np.arange(nx), y0 + dy * np.arange(ny), samples)

    @property
    def c_min(self) -> float:
        return self._c_min

    def _check_domain(self, x):
        x = np.asarray(x, dtype=float)
        inside = (
            (x[..., 0] >= self.x_axis[0])
            & (x[..., 0] <= self.x_axis[-1])
            & (x[..., 1] >= self.y_axis[0])
            & (x[..., 1] <= self.y_axis[-1])
        )
        if not np.all(inside):
            raise OutOfDomainError("velocity table queried outside its grid")
        return x

    def _ev(self, x, dx_order=0, dy_order=0):
        x = self._check_domain(x)
        flat = x.reshape(-1, 2)
        out = self._spline.ev(flat[:, 0], flat[:, 1], dx=dx_order, dy=dy_order)
        return out.reshape(x.shape[:-1])

    def speed(self, x):
        return self._ev(x)

    def gradient(self, x):
        return np.stack([self._ev(x, 1, 0), self._ev(x, 0, 1)], axis=-1)

    def hessian(self, x):
        cxx = self._ev(x, 2, 0)
        cxy = self._ev(x, 1, 1)
        cyy = self._ev(x, 0, 2)
        row0 = np.stack([cxx, cxy], axis=-1)
        row1 = np.stack([cxy, cyy], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def third_derivative(self, x):
        # Central differences of the spline Hessian; reduced accuracy.
        x = np.asarray(x, dtype=float)
        h = self._fd_step
        out = np.empty(x.shape[:-1] + (2, 2, 2))
        for k in range(2):
            step = np.zeros(2)
            step[k] = h
            out[..., k] = (self.hessian(x + step) - self.hessian(x - step)) / (2 * h)
        # symmetrize over all index permutations
        out = (out + np.swapaxes(out, -1, -2)) / 2
        out = (out + np.moveaxis(out, -3, -1)) / 2
        return out


def eval_speed(model: VelocityModel, x) -> float:
    """Convenience scalar accessor used by the matching pipeline."""
    return float(model.speed(np.asarray(x, dtype=float)))


def make_velocity(kind: str, **kw) -> VelocityModel:
    """Factory used by config loading."""
    if kind == "constant":
        return ConstantVelocity(kw["c0"])
    if kind == "gaussian_lens":
        return GaussianLens(kw["base"], kw["depth"], kw["center"], kw["width"])
    if kind == "table":
        return TabulatedVelocity.from_csv(kw["path"])
    raise ValueError(f"unknown velocity kind {kind!r}")


def caustic_lens() -> GaussianLens:
    """The lens velocity used by the caustic reproduction scenario."""
    return GaussianLens(base=2.0, depth=0.4, center=(0.0, 5.0), width=3.0)
