"""Packet-beam matching for the half-space Dirichlet problem.

Each surviving boundary packet, indexed by gamma = (j, k, lam) over the
boundary variables (t, x2), is matched by one Gaussian beam anchored where
its center ray crosses the boundary:

* the mode is + when the rescaled time frequency pt_1 = (2 pi p_jk / 4^j)_1
  is negative and - otherwise, so the beam moves into the right half plane;
* the crossing time is the packet's time center t_g = 2^-j lam_1;
* the crossing point is (0, 2^-j lam_2) with tangential momentum (pt)_2 and
  normal momentum -sigma sqrt(pt_1^2 / c^2 - pt_2^2) (transversal by the
  grazing cut-off);
* the anchored quadratic matrix is the unique symmetric solution of the
  boundary system, in closed form

      M_22 = 2 pi i,
      M_12 = (pdot_2 - 2 pi i xdot_2) / xdot_1,
      M_11 = (2 pi i (1 + xdot_2^2) - 2 pdot_2 xdot_2 + pdot . xdot)
             / xdot_1^2,

  whose imaginary part is positive definite by its arrowhead structure;
* the anchored amplitude equals the packet's peak 2^((j+1/2) d/2).

Back-propagating to t = 0 yields the initial parameter tuple; by
construction the restriction of the beam to the boundary approximates the
packet in (t, x2), and at t = 0 every beam center sits strictly inside the
left half plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .beams import (
    BeamParams,
    BeamTrajectory,
    StiffnessError,
    WellSpreadReport,
    beam_eval,
    check_well_spread,
    propagate_two_sided,
    spatial_gradient_eval,
    time_derivative_eval,
    wave_residual,
)
from .cutoff import GrazingReport
from .fields import Field2D, Grid2D
from .frame import (
    CoefficientSet,
    FrameIndex,
    FrequencyCover,
    LatticeSpec,
    packet_eval,
    packet_params,
)
from .ivp import _accumulate
from .velocity import VelocityModel


class TangentialRayError(ValueError):
    """Boundary Riccati system requested with vanishing normal velocity."""


class MatchingError(RuntimeError):
    """A packet could not be matched (internal inconsistency or truncation)."""


def boundary_riccati_matrix(xdot: np.ndarray, pdot: np.ndarray) -> np.ndarray:
    """Anchored quadratic matrix from the ray velocities at the crossing.

    Solves the boundary matching system for the unique symmetric M; requires
    a transversal crossing (xdot_1 != 0).  The imaginary part is positive
    definite: after Gaussian elimination its principal minors reduce to
    powers of 1/xdot_1^2.
    """
    xdot = np.asarray(xdot, dtype=float)
    pdot = np.asarray(pdot, dtype=float)
    d = xdot.shape[0]
    if abs(xdot[0]) < 1e-14:
        raise TangentialRayError("normal velocity vanishes at the anchor time")
    two_pi_i = 2j * np.pi
    M = np.zeros((d, d), dtype=complex)
    M[1:, 1:] = two_pi_i * np.eye(d - 1)
    m1s = (pdot[1:] - two_pi_i * xdot[1:]) / xdot[0]
    M[0, 1:] = m1s
    M[1:, 0] = m1s
    M[0, 0] = (
        two_pi_i * (1.0 + float(xdot[1:] @ xdot[1:]))
        - 2.0 * float(pdot[1:] @ xdot[1:])
        + float(pdot @ xdot)
    ) / xdot[0] ** 2
    return M


def boundary_riccati_residual(M: np.ndarray, xdot: np.ndarray, pdot: np.ndarray) -> float:
    """Componentwise residual of the defining system at the returned M.

    Targets: xdot.(M xdot) - pdot.xdot = 2 pi i, (pdot - M xdot)_k = 0 for
    k >= 2 (off-diagonal target), M_kl = 2 pi i delta_kl for k, l >= 2.
    """
    two_pi_i = 2j * np.pi
    r11 = xdot @ (M @ xdot) - pdot @ xdot - two_pi_i
    r1s = (pdot - M @ xdot)[1:]
    rss = M[1:, 1:] - two_pi_i * np.eye(xdot.shape[0] - 1)
    return float(
        max(abs(r11), np.abs(r1s).max() if r1s.size else 0.0, np.abs(rss).max())
    )


@dataclass
class MatchedBeam:
    """One boundary packet and its anchored, back-propagated beam."""

    gamma: FrameIndex
    mode: str
    t_gamma: float
    x_anchor: np.ndarray
    p_anchor: np.ndarray
    m_anchor: np.ndarray
    a_anchor: complex
    tau: float
    params_anchor: BeamParams
    params_zero: BeamParams  # back-propagated tuple read off at t = 0
    traj: BeamTrajectory
    transversality: float  # |p_1| / |p| at the anchor


@dataclass
class DirichletParametrix:
    beams: list[tuple[complex, MatchedBeam]]
    velocity: VelocityModel
    T: float
    dropped: list[FrameIndex] = field(default_factory=list)
    dropped_mass: float = 0.0
    well_spread: WellSpreadReport | None = None

    def matched(self) -> list[MatchedBeam]:
        return [mb for _, mb in self.beams]


def match_packet(
    gamma: FrameIndex,
    mode: str,
    velocity: VelocityModel,
    cover: FrequencyCover,
    lattice: LatticeSpec,
    T: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    tau_tol: float = 1e-10,
) -> MatchedBeam:
    """Anchor a beam to the packet's boundary crossing and back-propagate.

    ``mode`` comes from the grazing report's sign split.  Raises
    MatchingError when the grazing radicand is nonpositive (impossible after
    the cut-off, hence an internal inconsistency) or when the Riccati flow is
    truncated before reaching t = 0.
    """
    j = gamma.j
    if j < 1:
        raise ValueError("zeroth-scale packets are never matched")
    d = cover.d
    pt = cover.p_tilde(j, gamma.k)
    sigma = 1.0 if pt[0] > 0 else -1.0
    if (mode == "+") != (sigma < 0):
        raise ValueError("mode inconsistent with the sign of the time frequency")
    t_gamma = gamma.l1 * lattice.step * 2.0**-j
    x_anchor = np.array([0.0, gamma.l2 * lattice.step * 2.0**-j])
    c_here = float(velocity.speed(x_anchor))
    radicand = pt[0] ** 2 / c_here**2 - float(pt[1:] @ pt[1:])
    if radicand <= 0:
        raise MatchingError(
            f"grazing radicand {radicand:.3g} <= 0 for {gamma}; "
            "packet should have been removed by the cut-off"
        )
    p_anchor = np.empty(d)
    p_anchor[0] = -sigma * math.sqrt(radicand)
    p_anchor[1:] = pt[1:]

    # ray velocities at the anchor fix the boundary quadratic matrix
    xdot, pdot = velocity.flow_rhs(mode, x_anchor, p_anchor)
    if xdot[0] <= 0:
        raise MatchingError(f"anchored ray of {gamma} does not move rightward")
    m_anchor = boundary_riccati_matrix(xdot, pdot)

    tau = -velocity.hamiltonian(mode, x_anchor, p_anchor)
    if abs(tau - pt[0]) > tau_tol:
        raise MatchingError(
            f"time-frequency identity violated for {gamma}: "
            f"tau={tau!r} vs pt_1={pt[0]!r}"
        )

    omega = 4.0**j
    a_anchor = 2.0 ** ((j + 0.5) * d / 2.0)
    params_anchor = BeamParams(
        mode=mode,
        omega=omega,
        a=x_anchor,
        xi=omega * p_anchor / (2.0 * np.pi),
        amp=a_anchor / omega ** (d / 4.0),
        m_tilde=m_anchor / (2.0 * np.pi),
        t0=t_gamma,
    )
    try:
        traj = propagate_two_sided(params_anchor, 0.0, T, rtol, atol, model=velocity)
    except StiffnessError as exc:
        raise MatchingError(f"integration failed for {gamma}: {exc}") from exc
    # forward truncation only flags the beam; losing t = 0 is fatal
    if traj.t_window[0] > 1e-12:
        raise MatchingError(f"back-propagation of {gamma} truncated before t = 0")

    st0 = traj.state(0.0)
    params_zero = BeamParams(
        mode=mode,
        omega=omega,
        a=st0.x,
        xi=omega * st0.p / (2.0 * np.pi),
        amp=st0.A / omega ** (d / 4.0),
        m_tilde=st0.M / (2.0 * np.pi),
        t0=0.0,
    )
    return MatchedBeam(
        gamma=gamma,
        mode=mode,
        t_gamma=t_gamma,
        x_anchor=x_anchor,
        p_anchor=p_anchor,
        m_anchor=m_anchor,
        a_anchor=complex(a_anchor),
        tau=float(tau),
        params_anchor=params_anchor,
        params_zero=params_zero,
        traj=traj,
        transversality=float(abs(p_anchor[0]) / np.linalg.norm(p_anchor)),
    )


def build_dirichlet(
    h_coeffs_cut: CoefficientSet,
    report: GrazingReport,
    velocity: VelocityModel,
    cover: FrequencyCover,
    lattice: LatticeSpec,
    T: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> DirichletParametrix:
    """Match every surviving packet and assemble the parametrix.

    Matching failures drop the packet; the dropped coefficient mass is
    recorded so error reports can be inflated accordingly.  The
    back-propagated parameter set is checked for well-spreadness.
    """
    beams = []
    dropped = []
    dropped_mass = 0.0
    for g, c in sorted(h_coeffs_cut.items()):
        if g.j == 0:
            continue
        try:
            mb = match_packet(g, report.mode_of(g), velocity, cover, lattice, T, rtol, atol)
        except MatchingError:
            dropped.append(g)
            dropped_mass += abs(c) ** 2
            continue
        if not (0 < mb.t_gamma < T):
            raise AssertionError(
                f"anchor time {mb.t_gamma} outside (0, T); the time cut-off "
                "should have removed this packet"
            )
        beams.append((complex(c), mb))
    par = DirichletParametrix(beams, velocity, T, dropped, math.sqrt(dropped_mass))
    if beams:
        par.well_spread = check_well_spread(
            {mb.gamma: mb.params_zero for _, mb in beams}, cover, lattice
        )
    return par


def eval_dirichlet(par: DirichletParametrix, t: float, grid: Grid2D) -> Field2D:
    """u~(t, .) = sum h~_g Phi_g(t, .) on the grid."""
    vals = np.zeros((grid.nx, grid.ny), dtype=complex)
    for c, mb in par.beams:
        _accumulate(vals, mb.traj, c, t, grid, beam_eval)
    return Field2D(grid, vals, t)


def eval_dirichlet_dt(par: DirichletParametrix, t: float, grid: Grid2D) -> Field2D:
    vals = np.zeros((grid.nx, grid.ny), dtype=complex)
    for c, mb in par.beams:
        _accumulate(vals, mb.traj, c, t, grid, time_derivative_eval)
    return Field2D(grid, vals, t)


def dirichlet_wave_residual(par: DirichletParametrix, t: float, grid: Grid2D) -> Field2D:
    vals = np.zeros((grid.nx, grid.ny), dtype=complex)

    def res_eval(traj, tt, pts):
        sub = Grid2D(
            max(pts.shape[0], 2), max(pts.shape[1], 2), pts[0, 0, 0], pts[0, 0, 1],
            pts[1, 0, 0] - pts[0, 0, 0] if pts.shape[0] > 1 else 1.0,
            pts[0, 1, 1] - pts[0, 0, 1] if pts.shape[1] > 1 else 1.0,
        )
        return wave_residual(traj, tt, sub).values[: pts.shape[0], : pts.shape[1]]

    for c, mb in par.beams:
        _accumulate(vals, mb.traj, c, t, grid, res_eval)
    return Field2D(grid, vals, t)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


def boundary_slice(
    mb: MatchedBeam, t_axis: np.ndarray, x2_axis: np.ndarray, derivative: str | None = None
) -> np.ndarray:
    """The beam restricted to the boundary, Phi(t, 0, x2), on a (t, x2) grid.

    ``derivative``: None for values, "t" or "x2" for first derivatives
    (analytic; no differencing).
    """
    out = np.zeros((len(t_axis), len(x2_axis)), dtype=complex)
    for i, t in enumerate(t_axis):
        if not mb.traj.in_window(t):
            continue
        pts = np.stack(
            [np.zeros_like(x2_axis), x2_axis], axis=-1
        )
        if derivative is None:
            out[i] = beam_eval(mb.traj, t, pts)
        elif derivative == "t":
            out[i] = time_derivative_eval(mb.traj, t, pts)
        elif derivative == "x2":
            out[i] = spatial_gradient_eval(mb.traj, t, pts)[..., 1]
        else:
            raise ValueError(derivative)
    return out


def packet_slice(
    gamma: FrameIndex,
    cover: FrequencyCover,
    lattice: LatticeSpec,
    t_axis: np.ndarray,
    x2_axis: np.ndarray,
    derivative: str | None = None,
) -> np.ndarray:
    """The target packet (and derivatives) on the same (t, x2) grid."""
    TT, XX = np.meshgrid(t_axis, x2_axis, indexing="ij")
    pts = np.stack([TT, XX], axis=-1)
    vals = packet_eval(gamma, lattice, cover, pts)
    if derivative is None:
        return vals
    a, p = packet_params(gamma, lattice, cover)
    s = 2.0 * np.pi * cover.alpha * 4.0**gamma.j
    axis = 0 if derivative == "t" else 1
    u = pts[..., axis] - a[axis]
    return vals * (2j * np.pi * p[axis] - s * u)


def boundary_restriction_residual(
    mb: MatchedBeam,
    cover: FrequencyCover,
    lattice: LatticeSpec,
    ball_radius_factor: float = 6.0,
    ppw: float = 6.0,
) -> tuple[float, float]:
    """(near, far) residuals of the beam's boundary restriction.

    near: relative L2 error against the packet over the ball of radius
    6 * 2^-j around the packet center in (t, x2); far: L2 mass of the
    restriction outside that ball relative to the total.
    """
    g = mb.gamma
    center = np.array([g.l1, g.l2], dtype=float) * lattice.step * 2.0**-g.j
    r = ball_radius_factor * 2.0**-g.j
    fmax = 4.0 ** (g.j + 1) * 1.2
    n = int(math.ceil(2 * r * fmax * ppw))
    t_axis = np.linspace(center[0] - r, center[0] + r, n)
    # clip the time axis to the trajectory window
    lo, hi = mb.traj.t_window
    t_axis = t_axis[(t_axis >= lo) & (t_axis <= hi)]
    x2_axis = np.linspace(center[1] - r, center[1] + r, n)
    beam_vals = boundary_slice(mb, t_axis, x2_axis)
    pkt_vals = packet_slice(g, cover, lattice, t_axis, x2_axis)
    TT, XX = np.meshgrid(t_axis, x2_axis, indexing="ij")
    inside = (TT - center[0]) ** 2 + (XX - center[1]) ** 2 <= r**2
    pkt_norm = math.sqrt(float(np.sum(np.abs(pkt_vals[inside]) ** 2)))
    near = math.sqrt(float(np.sum(np.abs((beam_vals - pkt_vals)[inside]) ** 2))) / pkt_norm
    total = float(np.sum(np.abs(beam_vals) ** 2))
    far_mass = float(np.sum(np.abs(beam_vals[~inside]) ** 2))
    far = far_mass / total if total > 0 else 0.0
    return near, far


def initial_time_residual(
    par: DirichletParametrix, grid_half: Grid2D
) -> tuple[float, float]:
    """(H1 norm of u~(0,.), L2 norm of d_t u~(0,.)) over the right half.

    Analytic spatial and time derivatives of the beams; the grid must cover
    x1 >= 0 only.
    """
    if grid_half.x0 < -1e-12:
        raise ValueError("expected a right-half-plane grid")
    u = np.zeros((grid_half.nx, grid_half.ny), dtype=complex)
    ux = np.zeros_like(u)
    uy = np.zeros_like(u)
    ut = np.zeros_like(u)

    def grad_x(traj, tt, pts):
        return spatial_gradient_eval(traj, tt, pts)[..., 0]

    def grad_y(traj, tt, pts):
        return spatial_gradient_eval(traj, tt, pts)[..., 1]

    for c, mb in par.beams:
        _accumulate(u, mb.traj, c, 0.0, grid_half, beam_eval)
        _accumulate(ux, mb.traj, c, 0.0, grid_half, grad_x)
        _accumulate(uy, mb.traj, c, 0.0, grid_half, grad_y)
        _accumulate(ut, mb.traj, c, 0.0, grid_half, time_derivative_eval)
    area = grid_half.cell_area
    h1 = math.sqrt(float((np.abs(u) ** 2 + np.abs(ux) ** 2 + np.abs(uy) ** 2).sum() * area))
    dt_l2 = math.sqrt(float((np.abs(ut) ** 2).sum() * area))
    return h1, dt_l2


def boundary_trace_residual(
    par: DirichletParametrix,
    h_coeffs: CoefficientSet,
    cover: FrequencyCover,
    lattice: LatticeSpec,
    t_axis: np.ndarray,
    x2_axis: np.ndarray,
) -> float:
    """Discrete H1((t, x2)) norm of u~(., 0, .) - h~ via analytic derivatives."""
    nt, nx2 = len(t_axis), len(x2_axis)
    diff = np.zeros((nt, nx2), dtype=complex)
    dt_diff = np.zeros_like(diff)
    dx_diff = np.zeros_like(diff)
    for c, mb in par.beams:
        diff += c * boundary_slice(mb, t_axis, x2_axis)
        dt_diff += c * boundary_slice(mb, t_axis, x2_axis, "t")
        dx_diff += c * boundary_slice(mb, t_axis, x2_axis, "x2")
    for g, c in h_coeffs.items():
        if g.j == 0:
            continue
        diff -= c * packet_slice(g, cover, lattice, t_axis, x2_axis)
        dt_diff -= c * packet_slice(g, cover, lattice, t_axis, x2_axis, "t")
        dx_diff -= c * packet_slice(g, cover, lattice, t_axis, x2_axis, "x2")
    area = (t_axis[1] - t_axis[0]) * (x2_axis[1] - x2_axis[0])
    return math.sqrt(
        float((np.abs(diff) ** 2 + np.abs(dt_diff) ** 2 + np.abs(dx_diff) ** 2).sum() * area)
    )


def forward_consistency_error(mb: MatchedBeam, velocity: VelocityModel) -> float:
    """Re-propagate the t = 0 tuple forward and compare at the anchor time.

    Exercises integrator reversibility; the defining identities make the
    anchored conditions reproducible to integrator tolerance.
    """
    from .beams import propagate

    tr = propagate(mb.params_zero, 0.0, mb.t_gamma, model=velocity)
    st = tr.state(mb.t_gamma)
    errs = [
        float(np.abs(st.x - mb.x_anchor).max()),
        float(np.abs(st.p - mb.p_anchor).max()),
        float(np.abs(st.M - mb.m_anchor).max()),
        float(abs(st.A - mb.a_anchor)),
    ]
    return max(errs)


def save_matched_csv(path, par: DirichletParametrix) -> None:
    header = (
        "j,k,lambda1,lambda2,mode,t_gamma,x0_1,x0_2,p0_1,p0_2,reA0,imA0,"
        "reM11,imM11,reM12,imM12,reM22,imM22"
    )
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for c, mb in par.beams:
            g = mb.gamma
            p0 = mb.params_zero
            M = p0.m_tilde * 2 * np.pi
            a0 = p0.amp * p0.omega ** (p0.d / 4.0)
            fh.write(
                f"{g.j},{g.k},{g.l1},{g.l2},{mb.mode},{mb.t_gamma!r},"
                f"{p0.a[0]!r},{p0.a[1]!r},{p0.xi[0] * 2 * np.pi / p0.omega!r},"
                f"{p0.xi[1] * 2 * np.pi / p0.omega!r},{a0.real!r},{a0.imag!r},"
                f"{M[0, 0].real!r},{M[0, 0].imag!r},{M[0, 1].real!r},{M[0, 1].imag!r},"
                f"{M[1, 1].real!r},{M[1, 1].imag!r}\n"
            )


def save_parametrix_manifest(path, par: DirichletParametrix, config_info: dict) -> None:
    with open(path, "w") as fh:
        for k, v in config_info.items():
            fh.write(f"{k} = {v}\n")
        fh.write(f"n_beams = {len(par.beams)}\n")
        fh.write(f"n_dropped = {len(par.dropped)}\n")
        fh.write(f"dropped_mass = {par.dropped_mass!r}\n")
        if par.dropped:
            fh.write("dropped_indices = " + ";".join(map(str, par.dropped)) + "\n")
        if par.well_spread is not None:
            fh.write(f"well_spread_pass = {par.well_spread.all_pass}\n")