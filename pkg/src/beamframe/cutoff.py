"""Microlocal preparation of boundary data: time window, grazing cut-off,
cone-condition diagnostics, and the almost-diagonalization residual.

Boundary data live on (t, x2) and are expanded in the same packet frame; the
first coordinate is time.  The cut-off acts as a diagonal multiplier on the
coefficients: eta(center, frequency) with a smooth window in the packet's
time center and a smooth ramp in the grazing margin

    m = |pt_1| / c(0, x2_center) - |pt_*|,   pt = 2 pi p_jk / 4^j.

Packets with nonpositive margin ride along the boundary and are removed;
surviving ones split into two mode classes by the sign of pt_1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .fields import Field2D, Grid2D
from .frame import (
    CoefficientSet,
    FrameIndex,
    FrequencyCover,
    LatticeSpec,
    ResolutionError,
    envelope_radius,
    packet_eval,
    packet_params,
)
from .velocity import VelocityModel


class ConeConditionError(RuntimeError):
    """A sampled transversal ray returned to the boundary within the window."""


class ConsistencyError(AssertionError):
    """A post-cutoff quantity violated a bound that holds by construction."""


def smoothstep(u: np.ndarray) -> np.ndarray:
    """C^2 quintic smoothstep: 0 for u <= 0, 1 for u >= 1."""
    v = np.clip(u, 0.0, 1.0)
    return v**3 * (10.0 - 15.0 * v + 6.0 * v * v)


@dataclass
class CutoffSpec:
    """Time window and grazing threshold with smooth margins.

    ``time_margin_frac`` sets the smoothstep width as a fraction of the
    window length; ``graze_margin_frac`` sets the margin ramp width as a
    fraction of the threshold.
    """

    t_lo: float
    t_hi: float
    graze_threshold: float = 0.1
    time_margin_frac: float = 0.1
    graze_margin_frac: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.t_lo < self.t_hi:
            raise ValueError("need 0 < t_lo < t_hi")
        if not 0 < self.graze_threshold < 1:
            raise ValueError("grazing threshold must lie in (0, 1)")

    @property
    def time_margin(self) -> float:
        return self.time_margin_frac * (self.t_hi - self.t_lo)

    @property
    def graze_margin(self) -> float:
        return self.graze_margin_frac * self.graze_threshold

    def time_multiplier(self, t: np.ndarray) -> np.ndarray:
        m = self.time_margin
        t = np.asarray(t, dtype=float)
        return smoothstep((t - self.t_lo) / m) * smoothstep((self.t_hi - t) / m)

    def graze_multiplier(self, margin: np.ndarray) -> np.ndarray:
        return smoothstep((np.asarray(margin, dtype=float) - self.graze_threshold) / self.graze_margin)


@dataclass
class GrazingRow:
    gamma: FrameIndex
    margin: float
    kept: bool
    mode: str  # '+', '-' or '' when dropped
    multiplier: float
    t_center: float


@dataclass
class GrazingReport:
    """Per-packet margins and the achieved post-cutoff constants."""

    rows: list[GrazingRow] = field(default_factory=list)
    threshold: float = 0.0
    t_window_achieved: tuple[float, float] | None = None
    plus_set: list[FrameIndex] = field(default_factory=list)
    minus_set: list[FrameIndex] = field(default_factory=list)

    def kept(self) -> list[GrazingRow]:
        return [r for r in self.rows if r.kept]

    def mode_of(self, gamma: FrameIndex) -> str:
        if gamma in self.plus_set:
            return "+"
        if gamma in self.minus_set:
            return "-"
        raise KeyError(f"{gamma} not in the kept set")

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("j,k,lambda1,lambda2,margin,kept,mode\n")
            for r in self.rows:
                g = r.gamma
                fh.write(
                    f"{g.j},{g.k},{g.l1},{g.l2},{r.margin!r},{int(r.kept)},{r.mode}\n"
                )


def apply_cutoff(
    coeffs: CoefficientSet,
    spec: CutoffSpec,
    velocity: VelocityModel,
    cover: FrequencyCover,
    lattice: LatticeSpec,
) -> tuple[CoefficientSet, GrazingReport]:
    """Multiply coefficients by eta(center, frequency) and drop the rest.

    Zeroth-scale coefficients are removed outright; indices with a zero
    multiplier are removed and reported.  The surviving set is partitioned by
    propagation direction: pt_1 < 0 feeds the + mode, pt_1 > 0 the - mode.
    An empty surviving set is allowed (all-grazing data) and simply yields an
    empty coefficient set.
    """
    out = CoefficientSet(sobolev_exponent=coeffs.sobolev_exponent)
    report = GrazingReport(threshold=spec.graze_threshold)
    t_lo_seen, t_hi_seen = np.inf, -np.inf
    for g, c in coeffs.items():
        if g.j == 0:
            continue
        pt = cover.p_tilde(g.j, g.k)
        center = np.array([g.l1, g.l2], dtype=float) * lattice.step * 2.0**-g.j
        c_speed = float(velocity.speed(np.array([0.0, center[1]])))
        margin = float(abs(pt[0]) / c_speed - np.linalg.norm(pt[1:]))
        eta = float(spec.time_multiplier(center[0]) * spec.graze_multiplier(margin))
        kept = eta > 0.0
        mode = ""
        if kept:
            mode = "+" if pt[0] < 0 else "-"
            out[g] = c * eta
            (report.plus_set if mode == "+" else report.minus_set).append(g)
            t_lo_seen = min(t_lo_seen, center[0])
            t_hi_seen = max(t_hi_seen, center[0])
        report.rows.append(GrazingRow(g, margin, kept, mode, eta, center[0]))
    if report.kept():
        report.t_window_achieved = (t_lo_seen, t_hi_seen)
    return out, report


def nontangential_floor(report: GrazingReport, velocity: VelocityModel, cover: FrequencyCover) -> float:
    """min over kept packets of |pt_1|; at least threshold * c_min by
    construction of the grazing cut-off."""
    kept = report.kept()
    if not kept:
        raise ValueError("no kept packets to bound")
    floor = min(abs(cover.p_tilde(r.gamma.j, r.gamma.k)[0]) for r in kept)
    if floor < report.threshold * velocity.c_min:
        raise ConsistencyError(
            f"non-tangential floor {floor:.3g} below threshold * c_min "
            f"{report.threshold * velocity.c_min:.3g}"
        )
    return floor


# ---------------------------------------------------------------------------
# Cone condition
# ---------------------------------------------------------------------------


def _ray_rhs(t, y, model, sign):
    x, p = y[:2], y[2:]
    xd, pd = model.flow_rhs("+" if sign > 0 else "-", x, p)
    return np.concatenate([xd, pd])


def cone_condition_check(
    velocity: VelocityModel,
    T: float,
    angle_floor: float,
    x2_samples: np.ndarray,
    n_angles: int = 9,
    rtol: float = 1e-9,
) -> tuple[float, dict]:
    """Measure the transversal-ray escape constant.

    Rays leave the boundary x1 = 0 at positions x2 with |p1| >= angle_floor
    * |p|, both modes and both signs of p1, integrated over [-T, T] (the
    Hamiltonian is autonomous, so the launch time is irrelevant).  Returns
    (c_turn, worst_ray) with c_turn = inf |x1(t)| / |t|; a ray re-entering
    the boundary region raises ConeConditionError.
    """
    if not 0 < angle_floor <= 1:
        raise ValueError("angle_floor must lie in (0, 1]")
    c_turn = np.inf
    worst = {}
    cos_vals = np.linspace(angle_floor, 1.0, n_angles)
    for x2 in np.atleast_1d(x2_samples):
        for mode in ("+", "-"):
            for cos_t in cos_vals:
                for sgn in (1.0, -1.0):
                    p0 = np.array([sgn * cos_t, math.sqrt(1 - min(cos_t**2, 1.0))])
                    y0 = np.array([0.0, x2, p0[0], p0[1]])
                    for t_end in (T, -T):
                        sol = solve_ivp(
                            _ray_rhs,
                            (0.0, t_end),
                            y0,
                            method="RK45",
                            rtol=rtol,
                            atol=1e-12,
                            dense_output=True,
                            args=(velocity, 1.0 if mode == "+" else -1.0),
                        )
                        ts = np.linspace(0.0, t_end, 200)[1:]
                        x1 = sol.sol(ts)[0]
                        ratios = np.abs(x1) / np.abs(ts)
                        if np.abs(x1[5:]).min() < 1e-9:
                            raise ConeConditionError(
                                f"ray from x2={x2} mode={mode} cos={cos_t:.3f} "
                                f"returned to the boundary"
                            )
                        r = float(ratios.min())
                        if r < c_turn:
                            c_turn = r
                            worst = {
                                "x2": float(x2),
                                "mode": mode,
                                "cos": float(cos_t),
                                "sign": sgn,
                                "t_end": t_end,
                            }
    return c_turn, worst


# ---------------------------------------------------------------------------
# Almost diagonalization
# ---------------------------------------------------------------------------


@dataclass
class Symbol:
    """Order-zero symbol psi(x, xi) with structure hints.

    ``fn`` maps (x, xi) arrays (broadcastable, last axis = d) to values.
    ``x_only`` / ``xi_only`` enable the exact fast quantization paths:
    an x-only symbol quantizes to pointwise multiplication and a xi-only
    symbol to a Fourier multiplier.
    """

    fn: callable
    x_only: bool = False
    xi_only: bool = False

    def __call__(self, x, xi):
        return self.fn(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))


def angle_smoothstep_symbol(theta0: float, theta1: float) -> Symbol:
    """Smoothstep in the frequency angle (order-0, x-independent)."""

    def fn(x, xi):
        ang = np.arctan2(xi[..., 1], xi[..., 0])
        return smoothstep((ang - theta0) / (theta1 - theta0))

    return Symbol(fn, xi_only=True)


def quantize_apply(symbol: Symbol, f: Field2D, chunk: int = 32) -> Field2D:
    """Kohn-Nirenberg quantization psi(x, D) f on the field's grid.

    The x-only and xi-only cases are exact (multiplication and Fourier
    multiplier).  The general case sums psi(x, xi_b) fhat(xi_b) e^{2 pi i x
    xi_b} d xi over the significant frequency bins, chunked to bound memory;
    it is quadratic in the grid size and meant for small packet-local grids.
    """
    grid = f.grid
    if symbol.x_only:
        vals = symbol(grid.points(), np.zeros(2)) * f.values
        return Field2D(grid, vals, f.t)
    fhat = f.fft()
    fx, fy = grid.freq_axes()
    if symbol.xi_only:
        XI = np.stack(np.meshgrid(fx, fy, indexing="ij"), axis=-1)
        mult = symbol(np.zeros(2), XI)
        return Field2D.from_spectrum(grid, fhat * mult, f.t)
    # general Kohn-Nirenberg sum over significant bins
    dxi = 1.0 / (grid.nx * grid.dx) / (grid.ny * grid.dy)
    mags = np.abs(fhat)
    keep = np.nonzero(mags > 1e-14 * mags.max())
    xis = np.stack([fx[keep[0]], fy[keep[1]]], axis=-1)
    amps = fhat[keep] * dxi
    pts = grid.points()
    out = np.zeros((grid.nx, grid.ny), dtype=complex)
    for start in range(0, len(amps), chunk):
        xi_c = xis[start : start + chunk]
        amp_c = amps[start : start + chunk]
        phase = np.exp(2j * np.pi * np.tensordot(pts, xi_c.T, axes=1))
        psi_vals = symbol(pts[..., None, :], xi_c[None, None, :, :])
        out += np.einsum("xyc,c->xy", phase * psi_vals, amp_c)
    return Field2D(grid, out, f.t)


def packet_grid(
    gamma: FrameIndex,
    lattice: LatticeSpec,
    cover: FrequencyCover,
    oversample: float = 2.0,
    width_factor: float = 1.0,
) -> Grid2D:
    """Uniform grid covering one packet's truncated support at a sampling
    rate ``oversample`` times the carrier Nyquist requirement."""
    a, p = packet_params(gamma, lattice, cover)
    r = width_factor * envelope_radius(cover.alpha) * 2.0**-gamma.j
    fmax = float(np.linalg.norm(p)) + 2.0**gamma.j * envelope_radius(cover.alpha, 1e-16)
    dx = 1.0 / (2.0 * fmax * oversample)
    n = int(math.ceil(2 * r / dx))
    n += n % 2
    return Grid2D(n, n, a[0] - r, a[1] - r, 2 * r / n, 2 * r / n)


def almost_diag_residual(
    symbol: Symbol,
    gamma: FrameIndex,
    lattice: LatticeSpec,
    cover: FrequencyCover,
    grid: Grid2D | None = None,
) -> float:
    """L2 norm of psi(x, D) phi_gamma - psi(center, frequency) phi_gamma.

    The residual decays like 2^-j for order-zero symbols, which is the
    numerical form of the almost-diagonalization property.
    """
    if grid is None:
        grid = packet_grid(gamma, lattice, cover)
    a, p = packet_params(gamma, lattice, cover)
    fld = Field2D(grid, packet_eval(gamma, lattice, cover, grid.points()))
    applied = quantize_apply(symbol, fld)
    diag = complex(symbol(a, p)) * fld.values
    return float(
        np.sqrt(np.sum(np.abs(applied.values - diag) ** 2) * grid.cell_area)
    )