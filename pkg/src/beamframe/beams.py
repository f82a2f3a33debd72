"""Gaussian beam propagation: Hamilton flow, Riccati matrix, transport.

A beam is Phi(t, x) = A(t) exp(i w theta(t, x)) with

    theta = p(t) . (x - x(t)) + (x - x(t)) . M(t) (x - x(t)) / 2,

where (x, p) follow the Hamiltonian flow of H = +/- c(x)|p|, the complex
symmetric matrix M obeys the Riccati equation

    M' + D + B M + M B^T + M X M = 0,

with D, B, X the second-derivative blocks of H along the ray, and the
amplitude obeys A' = A (tr B - tr(X M)) / 2 (the transport equation reduced
by the homogeneity of H).  The auxiliary system Y' = (B^T + X M) Y with
Y(t0) = I tracks ray-tube spreading: |A| equals |A0| |det Y|^(-1/2) times the
velocity ratio c(x(t)) / c(x(t0)), and caustics show up as minima of |det Y|.

Initial data at the anchor time t0 come from a parameter tuple
(w, a, xi, A~, M~): x = a, p = 2 pi xi / w, M = 2 pi M~, A = A~ w^(d/4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .fields import Field2D, Grid2D
from .frame import FrameIndex, FrequencyCover, LatticeSpec, envelope_radius
from .velocity import Mode, VelocityModel, mode_sign


class WindowError(ValueError):
    """Beam evaluated outside its trajectory's validity window."""


class StiffnessError(RuntimeError):
    """The adaptive integrator failed (step-size underflow or similar)."""


class ZerothScaleError(ValueError):
    """Beam parameters requested for a zeroth-scale frame element."""


DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
IM_M_FLOOR = 5e-3  # beams are suppressed when min eig Im M falls below this


@dataclass
class BeamParams:
    """Initial-condition tuple (mode, w, a, xi, A~, M~) anchored at t0."""

    mode: Mode
    omega: float
    a: np.ndarray
    xi: np.ndarray
    amp: complex
    m_tilde: np.ndarray
    t0: float = 0.0

    def __post_init__(self) -> None:
        self.a = np.asarray(self.a, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.m_tilde = np.asarray(self.m_tilde, dtype=complex)
        if self.omega <= 0:
            raise ValueError("frequency parameter must be positive")
        if np.linalg.norm(self.xi) == 0:
            raise ValueError("frequency vector must be nonzero")
        if self.amp == 0:
            raise ValueError("amplitude factor must be nonzero")
        sym = np.linalg.norm(self.m_tilde - self.m_tilde.T)
        if sym > 1e-12:
            raise ValueError(f"M~ must be symmetric (residual {sym:.2e})")
        if np.linalg.eigvalsh(self.m_tilde.imag).min() <= 0:
            raise ValueError("Im M~ must be positive definite")

    @property
    def d(self) -> int:
        return self.a.shape[0]

    def initial_state(self) -> np.ndarray:
        """Packed complex ODE state [x, p, triu(M), A, Y.flat] at t0."""
        d = self.d
        x0 = self.a.astype(complex)
        p0 = (2.0 * np.pi / self.omega) * self.xi.astype(complex)
        m0 = 2.0 * np.pi * self.m_tilde
        a0 = complex(self.amp) * self.omega ** (d / 4.0)
        return np.concatenate(
            [x0, p0, m0[np.triu_indices(d)], [a0], np.eye(d, dtype=complex).ravel()]
        )


def standard_params(
    gamma: FrameIndex,
    cover: FrequencyCover,
    lattice: LatticeSpec | None = None,
    mode: Mode = "+",
) -> BeamParams:
    """The frame-derived parameters (4^j, 2^-j lam, p_jk, 2^(d/4), i I).

    The integer translate is read through the lattice step (1 when no
    lattice is given), matching packet_eval's indexing, so the beam at the
    anchor time coincides pointwise with the frame packet.
    """
    if gamma.j == 0:
        raise ZerothScaleError("zeroth-scale elements are not propagated as beams")
    d = cover.d
    step = 1.0 if lattice is None else lattice.step
    return BeamParams(
        mode=mode,
        omega=4.0**gamma.j,
        a=np.array([gamma.l1, gamma.l2], dtype=float) * step * 2.0**-gamma.j,
        xi=cover.center(gamma.j, gamma.k).copy(),
        amp=2.0 ** (d / 4.0),
        m_tilde=1j * np.eye(d),
        t0=0.0,
    )


def _unpack(d: int, y: np.ndarray):
    x = y[:d]
    p = y[d : 2 * d]
    nm = d * (d + 1) // 2
    M = np.zeros((d, d), dtype=complex)
    iu = np.triu_indices(d)
    M[iu] = y[2 * d : 2 * d + nm]
    M = M + np.triu(M, 1).T
    A = y[2 * d + nm]
    Y = y[2 * d + nm + 1 :].reshape(d, d)
    return x, p, M, A, Y


def _hamrhs_blocks(model: VelocityModel, mode: Mode, x: np.ndarray, p: np.ndarray):
    """Flow velocities and Hessian blocks of H at a real phase-space point."""
    s = mode_sign(mode)
    nrm = float(np.linalg.norm(p))
    phat = p / nrm
    c = float(model.speed(x))
    g = model.gradient(x)
    hess = model.hessian(x)
    xdot = s * c * phat
    pdot = -s * nrm * g
    D = s * nrm * hess
    B = s * np.outer(g, phat)
    X = s * (c / nrm) * (np.eye(x.shape[0]) - np.outer(phat, phat))
    return xdot, pdot, D, B, X


def _beam_rhs(t, y, model: VelocityModel, mode: Mode, d: int):
    x, p, M, A, Y = _unpack(d, y)
    xr, pr = x.real, p.real
    xdot, pdot, D, B, X = _hamrhs_blocks(model, mode, xr, pr)
    Mdot = -(D + B @ M + M @ B.T + M @ X @ M)
    G = 0.5 * (np.trace(B) - np.trace(X @ M))
    Ydot = (B.T + X @ M) @ Y
    iu = np.triu_indices(d)
    return np.concatenate(
        [xdot.astype(complex), pdot.astype(complex), Mdot[iu], [A * G], Ydot.ravel()]
    )


def _im_m_floor_event(t, y, model, mode, d):
    _, _, M, _, _ = _unpack(d, y)
    return float(np.linalg.eigvalsh(M.imag).min()) - IM_M_FLOOR


_im_m_floor_event.terminal = True  # type: ignore[attr-defined]


@dataclass
class BeamState:
    """Trajectory snapshot at one time."""

    t: float
    x: np.ndarray
    p: np.ndarray
    M: np.ndarray
    A: complex
    Y: np.ndarray

    @property
    def det_y(self) -> complex:
        return complex(np.linalg.det(self.Y))


@dataclass
class BeamTrajectory:
    """Dense-output beam trajectory, possibly truncated at the Im M floor.

    ``segments`` hold scipy dense-output solutions ordered away from the
    anchor time; the validity window is the largest time interval they cover
    with min eig Im M above the floor.
    """

    params: BeamParams
    model: VelocityModel
    segments: list  # (OdeSolution, lo, hi)
    t_window: tuple[float, float]
    truncated: bool
    rtol: float
    atol: float

    @property
    def mode(self) -> Mode:
        return self.params.mode

    def in_window(self, t: float) -> bool:
        lo, hi = self.t_window
        return lo - 1e-12 <= t <= hi + 1e-12

    def state(self, t: float) -> BeamState:
        if not self.in_window(t):
            raise WindowError(f"t={t} outside validity window {self.t_window}")
        d = self.params.d
        for sol, lo, hi in self.segments:
            if lo - 1e-12 <= t <= hi + 1e-12:
                x, p, M, A, Y = _unpack(d, sol(t))
                return BeamState(t, x.real, p.real, M, complex(A), Y)
        raise WindowError(f"t={t} not covered by any trajectory segment")

    def times(self, n: int = 512) -> np.ndarray:
        lo, hi = self.t_window
        return np.linspace(lo, hi, n)

    def hamiltonian_drift(self, n: int = 256) -> float:
        """max_t |H(t) - H(t0)| / |H(t0)| over the window."""
        h0 = None
        worst = 0.0
        for t in self.times(n):
            st = self.state(t)
            h = self.model.hamiltonian(self.mode, st.x, st.p)
            if h0 is None:
                h0 = self.model.hamiltonian(
                    self.mode, self.state(self.params.t0).x, self.state(self.params.t0).p
                )
            worst = max(worst, abs(h - h0) / abs(h0))
        return worst

    def amplitude_identity_error(self, n: int = 256) -> float:
        """Relative error of |A| = |A0| |det Y|^(-1/2) c(x)/c(x0)."""
        st0 = self.state(self.params.t0)
        c0 = float(self.model.speed(st0.x))
        worst = 0.0
        for t in self.times(n):
            st = self.state(t)
            pred = (
                abs(st0.A)
                * abs(st.det_y) ** -0.5
                * float(self.model.speed(st.x))
                / c0
            )
            worst = max(worst, abs(abs(st.A) - pred) / abs(st.A))
        return worst

    def min_im_m(self, n: int = 256) -> float:
        return min(
            float(np.linalg.eigvalsh(self.state(t).M.imag).min()) for t in self.times(n)
        )


def propagate(
    params: BeamParams,
    t_from: float,
    t_to: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    model: VelocityModel | None = None,
) -> BeamTrajectory:
    """Integrate the beam ODE system from the anchor time to t_to.

    Uses an adaptive embedded Runge-Kutta 5(4) pair with dense output;
    backward integration (t_to < t_from) is supported.  Since the symmetric
    matrix M is integrated in packed upper-triangle form, its symmetry is
    exact by construction.  The integration stops early (and the trajectory
    is flagged truncated) when min eig Im M reaches the floor 0.005.
    """
    if model is None:
        raise ValueError("a velocity model is required")
    if abs(t_from - params.t0) > 1e-12:
        raise ValueError("integration must start at the parameter anchor time")
    if t_to == t_from:
        raise ValueError("empty integration interval")
    d = params.d
    sol = solve_ivp(
        _beam_rhs,
        (t_from, t_to),
        params.initial_state(),
        method="RK45",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=[_im_m_floor_event],
        args=(model, params.mode, d),
    )
    if sol.status == -1:
        raise StiffnessError(f"integration failed: {sol.message}")
    truncated = sol.status == 1
    t_end = float(sol.t[-1])
    lo, hi = min(t_from, t_end), max(t_from, t_end)
    return BeamTrajectory(
        params=params,
        model=model,
        segments=[(sol.sol, lo, hi)],
        t_window=(lo, hi),
        truncated=truncated,
        rtol=rtol,
        atol=atol,
    )


def propagate_two_sided(
    params: BeamParams,
    t_lo: float,
    t_hi: float,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    model: VelocityModel | None = None,
) -> BeamTrajectory:
    """Propagate from the anchor time both backward to t_lo and forward to
    t_hi (used by boundary-anchored beams with 0 < t0 < T)."""
    if not t_lo <= params.t0 <= t_hi:
        raise ValueError("anchor time must lie inside [t_lo, t_hi]")
    segs = []
    truncated = False
    lo, hi = params.t0, params.t0
    for target in (t_lo, t_hi):
        if target == params.t0:
            continue
        tr = propagate(params, params.t0, target, rtol, atol, model)
        segs.extend(tr.segments)
        truncated = truncated or tr.truncated
        lo = min(lo, tr.t_window[0])
        hi = max(hi, tr.t_window[1])
    return BeamTrajectory(params, model, segs, (lo, hi), truncated, rtol, atol)


# ---------------------------------------------------------------------------
# Pointwise evaluation
# ---------------------------------------------------------------------------


def beam_eval(traj: BeamTrajectory, t: float, x: np.ndarray) -> np.ndarray:
    """Phi(t, x) = A exp(i w [p.u + u.M u / 2]), u = x - x(t)."""
    st = traj.state(t)
    x = np.asarray(x, dtype=float)
    u = x - st.x
    w = traj.params.omega
    lin = u @ st.p
    quad = 0.5 * np.einsum("...i,ij,...j->...", u, st.M, u)
    return st.A * np.exp(1j * w * (lin + quad))


def _theta_t(st: BeamState, traj: BeamTrajectory, u: np.ndarray):
    """Exact d theta / dt from the ODE right-hand sides (no differencing)."""
    model, mode = traj.model, traj.mode
    xdot, pdot, D, B, X = _hamrhs_blocks(model, mode, st.x, st.p)
    Mdot = -(D + B @ st.M + st.M @ B.T + st.M @ X @ st.M)
    h = model.hamiltonian(mode, st.x, st.p)
    lin = u @ (pdot - st.M @ xdot)
    quad = 0.5 * np.einsum("...i,ij,...j->...", u, Mdot, u)
    return -h + lin + quad, (xdot, pdot, D, B, X, Mdot)


def time_derivative_eval(traj: BeamTrajectory, t: float, x: np.ndarray) -> np.ndarray:
    """Exact d Phi / dt = (A'/A + i w theta_t) Phi from the ODE data."""
    st = traj.state(t)
    x = np.asarray(x, dtype=float)
    u = x - st.x
    th_t, (xdot, pdot, D, B, X, Mdot) = _theta_t(st, traj, u)
    G = 0.5 * (np.trace(B) - np.trace(X @ st.M))
    return (G + 1j * traj.params.omega * th_t) * beam_eval(traj, t, x)


def spatial_gradient_eval(traj: BeamTrajectory, t: float, x: np.ndarray) -> np.ndarray:
    """grad Phi = i w (p + M u) Phi, shape (..., d)."""
    st = traj.state(t)
    x = np.asarray(x, dtype=float)
    u = x - st.x
    grad_theta = st.p + np.einsum("ij,...j->...i", st.M, u)
    return 1j * traj.params.omega * grad_theta * beam_eval(traj, t, x)[..., None]


def _second_order_data(traj: BeamTrajectory, st: BeamState):
    """x'', p'', M'', and the transport-rate derivative along the ray.

    Requires third derivatives of the velocity (analytic for the constant
    and lens kinds, finite-difference estimates for tables).
    """
    model, mode = traj.model, traj.mode
    s = mode_sign(mode)
    x, p, M = st.x, st.p, st.M
    xdot, pdot, D, B, X = _hamrhs_blocks(model, mode, x, p)
    nrm = float(np.linalg.norm(p))
    phat = p / nrm
    c = float(model.speed(x))
    g = model.gradient(x)
    hess = model.hessian(x)
    t3 = model.third_derivative(x)

    cdot = float(g @ xdot)
    gdot = hess @ xdot
    hessdot = np.einsum("ijk,k->ij", t3, xdot)
    nrmdot = float(phat @ pdot)
    phatdot = (pdot - phat * nrmdot) / nrm

    xddot = B.T @ xdot + X @ pdot
    pddot = -(D @ xdot + B @ pdot)
    Ddot = s * (nrmdot * hess + nrm * hessdot)
    Bdot = s * (np.outer(gdot, phat) + np.outer(g, phatdot))
    proj = np.eye(x.shape[0]) - np.outer(phat, phat)
    Xdot = s * (
        (cdot / nrm - c * nrmdot / nrm**2) * proj
        - (c / nrm) * (np.outer(phatdot, phat) + np.outer(phat, phatdot))
    )
    Mdot = -(D + B @ M + M @ B.T + M @ X @ M)
    Mddot = -(
        Ddot
        + Bdot @ M
        + B @ Mdot
        + Mdot @ B.T
        + M @ Bdot.T
        + Mdot @ X @ M
        + M @ Xdot @ M
        + M @ X @ Mdot
    )
    G = 0.5 * (np.trace(B) - np.trace(X @ M))
    Gdot = 0.5 * (np.trace(Bdot) - np.trace(Xdot @ M) - np.trace(X @ Mdot))
    return xdot, pdot, xddot, pddot, Mdot, Mddot, G, Gdot


def wave_residual(traj: BeamTrajectory, t: float, grid: Grid2D) -> Field2D:
    """(d_tt - c^2 Lap) Phi evaluated analytically from the ODE data.

    Writing Phi = A e^{i w theta}, the residual is
    Phi [ (i w)^2 nu0 + (i w) nu1 + nu2 ] with
    nu0 = theta_t^2 - c(x)^2 |grad theta|^2   (cubic-order vanishing),
    nu1 = 2 theta_t A'/A + theta_tt - c(x)^2 tr M   (linear-order),
    nu2 = A''/A.
    All time derivatives come from the ODE right-hand sides; second
    derivatives use the analytic velocity derivative tensors.
    """
    st = traj.state(t)
    pts = grid.points()
    u = pts - st.x
    w = traj.params.omega
    xdot, pdot, xddot, pddot, Mdot, Mddot, G, Gdot = _second_order_data(traj, st)
    model = traj.model

    h = model.hamiltonian(traj.mode, st.x, st.p)
    th_t = (
        -h
        + u @ (pdot - st.M @ xdot)
        + 0.5 * np.einsum("...i,ij,...j->...", u, Mdot, u)
    )
    th_tt = (
        u @ (pddot - st.M @ xddot - 2.0 * (Mdot @ xdot))
        - 2.0 * float(pdot @ xdot)
        - float(st.p @ xddot)
        + float(xdot @ (st.M @ xdot))
        + 0.5 * np.einsum("...i,ij,...j->...", u, Mddot, u)
    )
    grad_theta = st.p + np.einsum("ij,...j->...i", st.M, u)
    c2 = np.asarray(model.speed(pts)) ** 2
    nu0 = th_t**2 - c2 * np.einsum("...i,...i->...", grad_theta, grad_theta)
    nu1 = 2.0 * th_t * G + th_tt - c2 * np.trace(st.M)
    nu2 = Gdot + G * G

    phi = st.A * np.exp(
        1j
        * w
        * ((u @ st.p) + 0.5 * np.einsum("...i,ij,...j->...", u, st.M, u))
    )
    vals = phi * ((1j * w) ** 2 * nu0 + (1j * w) * nu1 + nu2)
    return Field2D(grid, vals, t)


def caustic_indicator(traj: BeamTrajectory, n: int = 2048) -> tuple[float, float]:
    """(t*, min |det Y|) over the validity window: the focusing proxy.

    Interior local minima of |det Y| (ray-tube collapse) take precedence;
    when |det Y| is monotone the window endpoint is reported, so a straight
    ray returns its start time.
    """
    ts = traj.times(n)
    dets = np.array([abs(traj.state(t).det_y) for t in ts])
    interior = np.flatnonzero(
        (dets[1:-1] <= dets[:-2]) & (dets[1:-1] <= dets[2:])
    )
    if interior.size:
        i = int(interior[np.argmin(dets[interior + 1])] + 1)
    else:
        i = int(np.argmin(dets))
    return float(ts[i]), float(dets[i])


# ---------------------------------------------------------------------------
# Well-spread diagnostics
# ---------------------------------------------------------------------------


def phase_space_distance(x, xi, x2, xi2) -> float:
    """|xi||xi'||x-x'|^2 + |xi-xi'|^2."""
    return float(
        np.linalg.norm(xi) * np.linalg.norm(xi2) * np.sum((np.asarray(x) - np.asarray(x2)) ** 2)
        + np.sum((np.asarray(xi) - np.asarray(xi2)) ** 2)
    )


@dataclass
class WellSpreadCaps:
    """Acceptance caps for the measured well-spread constants."""

    center_comparability: float = 20.0  # (i)
    metric_domination: float = 1e-3  # (ii), lower bound on the min ratio
    m_norm: float = 30.0  # (iii)
    m_imag_floor: float = 1e-3  # (iii)
    omega_band: tuple[float, float] = (0.9, 1.1)  # (iv) omega / 4^j
    xi_band: tuple[float, float] = (0.05, 40.0)  # (iv) |xi| / omega
    amp_band: tuple[float, float] = (1e-2, 1e2)  # (v)


@dataclass
class WellSpreadReport:
    """Measured constants for conditions (i)-(v) with pass flags."""

    constants: dict
    passes: dict
    worst_pairs: dict

    @property
    def all_pass(self) -> bool:
        return all(self.passes.values())


def check_well_spread(
    params_set: dict[FrameIndex, BeamParams],
    cover: FrequencyCover,
    lattice: LatticeSpec,
    caps: WellSpreadCaps | None = None,
) -> WellSpreadReport:
    """Measure how the parameter family compares to the frame-derived one.

    Conditions: (i) standard centers dominated by actual center spread,
    (ii) actual phase-space separations dominate the standard ones,
    (iii) bounded symmetric M~ with uniformly positive imaginary part,
    (iv) omega comparable to 4^j and |xi| comparable to omega,
    (v) amplitude factors comparable to 1.
    """
    if not params_set:
        raise ValueError("empty parameter set")
    caps = caps or WellSpreadCaps()
    gams = list(params_set.keys())
    n = len(gams)
    a_star = np.array(
        [[g.l1, g.l2] for g in gams], dtype=float
    ) * (lattice.step * np.array([2.0**-g.j for g in gams])[:, None])
    xi_star = np.array([cover.center(g.j, g.k) for g in gams])
    a_act = np.array([params_set[g].a for g in gams])
    xi_act = np.array([params_set[g].xi for g in gams])

    constants: dict = {}
    worst: dict = {}

    # (i) and (ii): pairwise comparisons
    ratio_i = 0.0
    ratio_ii = np.inf
    pair_i = pair_ii = None
    for i in range(n):
        for k in range(i + 1, n):
            ds = float(np.linalg.norm(a_star[i] - a_star[k]))
            da = float(np.linalg.norm(a_act[i] - a_act[k]))
            r = ds / (da + 1.0)
            if r > ratio_i:
                ratio_i, pair_i = r, (gams[i], gams[k])
            dstar = phase_space_distance(a_star[i], xi_star[i], a_star[k], xi_star[k])
            dact = phase_space_distance(a_act[i], xi_act[i], a_act[k], xi_act[k])
            if dstar > 0:
                r2 = dact / dstar
                if r2 < ratio_ii:
                    ratio_ii, pair_ii = r2, (gams[i], gams[k])
    constants["center_comparability"] = ratio_i
    constants["metric_domination"] = ratio_ii if n > 1 else np.inf
    worst["center_comparability"] = pair_i
    worst["metric_domination"] = pair_ii

    # (iii)
    m_norms = []
    im_mins = []
    sym_res = []
    for g in gams:
        mt = params_set[g].m_tilde
        m_norms.append(float(np.linalg.norm(mt, 2)))
        im_mins.append(float(np.linalg.eigvalsh(mt.imag).min()))
        sym_res.append(float(np.linalg.norm(mt - mt.T)))
    constants["m_norm_max"] = max(m_norms)
    constants["m_imag_min"] = min(im_mins)
    constants["m_symmetry_residual"] = max(sym_res)
    worst["m_norm_max"] = gams[int(np.argmax(m_norms))]
    worst["m_imag_min"] = gams[int(np.argmin(im_mins))]

    # (iv)
    om_ratio = np.array([params_set[g].omega / 4.0**g.j for g in gams])
    xi_ratio = np.array(
        [np.linalg.norm(params_set[g].xi) / params_set[g].omega for g in gams]
    )
    constants["omega_over_4j"] = (float(om_ratio.min()), float(om_ratio.max()))
    constants["xi_over_omega"] = (float(xi_ratio.min()), float(xi_ratio.max()))
    worst["omega_over_4j"] = gams[int(np.argmax(np.abs(np.log(om_ratio))))]

    # (v)
    amp = np.array([abs(params_set[g].amp) for g in gams])
    constants["amp_abs"] = (float(amp.min()), float(amp.max()))
    worst["amp_abs"] = gams[int(np.argmax(np.abs(np.log(amp))))]

    passes = {
        "center_comparability": ratio_i <= caps.center_comparability,
        "metric_domination": constants["metric_domination"] >= caps.metric_domination,
        "m_bounds": constants["m_norm_max"] <= caps.m_norm
        and constants["m_imag_min"] >= caps.m_imag_floor
        and constants["m_symmetry_residual"] <= 1e-9,
        "frequency_bands": caps.omega_band[0] <= constants["omega_over_4j"][0]
        and constants["omega_over_4j"][1] <= caps.omega_band[1]
        and caps.xi_band[0] <= constants["xi_over_omega"][0]
        and constants["xi_over_omega"][1] <= caps.xi_band[1],
        "amplitude_band": caps.amp_band[0] <= constants["amp_abs"][0]
        and constants["amp_abs"][1] <= caps.amp_band[1],
    }
    return WellSpreadReport(constants, passes, worst)


def save_trajectory_csv(path, traj: BeamTrajectory, n: int = 512) -> None:
    header = "t,x1,x2,p1,p2,reA,imA,reM11,imM11,reM12,imM12,reM22,imM22,absdetY"
    rows = []
    for t in traj.times(n):
        st = traj.state(t)
        rows.append(
            [
                t,
                st.x[0],
                st.x[1],
                st.p[0],
                st.p[1],
                st.A.real,
                st.A.imag,
                st.M[0, 0].real,
                st.M[0, 0].imag,
                st.M[0, 1].real,
                st.M[0, 1].imag,
                st.M[1, 1].real,
                st.M[1, 1].imag,
                abs(st.det_y),
            ]
        )
    np.savetxt(path, np.array(rows), delimiter=",", header=header, comments="")
