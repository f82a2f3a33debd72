"""Reproducible scenario runners behind the CLI commands.

Each runner returns a plain dict of measured quantities (plus file dumps
when an output directory is given), so the acceptance suite and the CLI
share one code path.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np

from . import dirichlet as dm
from .beams import BeamParams, caustic_indicator, propagate
from .config import ConfigError, ScenarioConfig
from .cutoff import CutoffSpec, apply_cutoff, cone_condition_check
from .fdwave import (
    FdGrid,
    WaveSnapshot,
    _h1_norm_diff,
    boundary_data_from_packets,
    energy_norm_error,
    fd_solve_dirichlet,
    fd_solve_ivp,
    restrict_snapshot,
    save_manifest,
)
from .fields import Field2D, Grid2D, write_field, write_field_csv
from .frame import (
    CoefficientSet,
    FrameIndex,
    daubechies_defect,
    overlap_control,
    packet_eval,
    save_cover_csv,
)
from .ivp import build_ivp, eval_ivp, eval_ivp_dt
from .velocity import caustic_lens


class NumericalFailure(RuntimeError):
    """A scenario could not complete its numerical pipeline."""


# ---------------------------------------------------------------------------
# frame-check
# ---------------------------------------------------------------------------


def run_frame_check(config: ScenarioConfig, out_dir: Path | None = None) -> dict:
    """Overlap bounds, lattice defect, and the frame criterion."""
    t0 = time.time()
    cover = config.cover()
    lattice = config.lattice(cover)
    A, B, profile = overlap_control(cover)
    delta = daubechies_defect(cover, lattice)
    crit = delta / lattice.covolume < A
    report = {
        "A": A,
        "B": B,
        "B_over_A": B / A,
        "delta": delta,
        "delta_over_covolume": delta / lattice.covolume,
        "lattice_n": lattice.n,
        "criterion": bool(crit),
        "n_angular": {j: cover.n_angular(j) for j in range(0, cover.j_max + 1)},
        "elapsed_s": time.time() - t0,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            out_dir / "overlap_profile.csv",
            profile,
            delimiter=",",
            header="xi1,xi2,theta",
            comments="",
        )
        save_cover_csv(out_dir / "cover.csv", cover)
        save_manifest(out_dir / "frame_check.txt", {k: v for k, v in report.items() if k != "n_angular"})
    return report


# ---------------------------------------------------------------------------
# propagate (caustic front)
# ---------------------------------------------------------------------------


def front_beam_params(config: ScenarioConfig, n_beams: int = 50, cone_deg: float = 40.0, j: int = 4):
    """Beams of the focusing-front scenario: scale-j packets at the origin
    with frequency directions spread over the cone around (0, 1)."""
    cover = config.cover(j_max=j)
    pts = cover.centers[j]
    rad = np.linalg.norm(pts, axis=1)
    ring = np.nonzero(rad < rad.min() * 1.02)[0]
    ang = np.arctan2(pts[ring, 0], pts[ring, 1])  # angle from (0, 1)
    half = math.radians(cone_deg / 2.0)
    inside = ring[np.abs(ang) <= half]
    if len(inside) < n_beams:
        raise ConfigError(f"cone holds only {len(inside)} ring directions")
    sel = inside[np.round(np.linspace(0, len(inside) - 1, n_beams)).astype(int)]
    params = []
    for k in sel:
        params.append(
            BeamParams(
                mode="+",
                omega=4.0**j,
                a=np.zeros(2),
                xi=pts[k].copy(),
                amp=2.0 ** (cover.d / 4.0),
                m_tilde=1j * np.eye(2),
            )
        )
    return params


def run_propagate(
    config: ScenarioConfig,
    out_dir: Path | None = None,
    n_beams: int = 50,
    cone_deg: float = 40.0,
    T: float = 8.4,
    snapshot_times=(),
    use_lens_default: bool = True,
) -> dict:
    """Integrate the beam front and locate the focusing (caustic) time.

    The reported time is the median of the interior minima of |det Y| over
    the beams that actually focus; beams without an interior dip (the outer
    part of the fan) are counted but excluded from the median.
    """
    t0 = time.time()
    velocity = config.velocity()
    if use_lens_default and config.velocity_kind == "constant" and config.velocity_params.get("c0") == 1.0:
        velocity = caustic_lens()
    params = front_beam_params(config, n_beams, cone_deg)
    dips = []
    all_t = []
    trajs = []
    for bp in params:
        tr = propagate(bp, 0.0, T, config.rtol, config.atol, model=velocity)
        trajs.append(tr)
        ts, dmin = caustic_indicator(tr, n=1024)
        all_t.append(ts)
        lo, hi = tr.t_window
        if lo + 1e-6 < ts < hi - 1e-3:
            dips.append(ts)
    report = {
        "n_beams": len(params),
        "n_focusing": len(dips),
        "median_caustic_time": float(np.median(dips)) if dips else float("nan"),
        "caustic_time_range": (float(np.min(dips)), float(np.max(dips))) if dips else None,
        "max_curvature_proxy": _max_ray_curvature(trajs),
        "elapsed_s": time.time() - t0,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        from .beams import save_trajectory_csv

        for i, tr in enumerate(trajs[:: max(1, len(trajs) // 10)]):
            save_trajectory_csv(out_dir / f"track_{i:02d}.csv", tr, n=256)
        for t_snap in snapshot_times:
            fld = _front_envelope(trajs, t_snap)
            write_field(out_dir / f"front_{t_snap:.2f}.fld", fld)
            write_field_csv(out_dir / f"front_{t_snap:.2f}.csv", fld)
        save_manifest(out_dir / "propagate.txt", {k: v for k, v in report.items()})
        _write_gnuplot_script(out_dir)
    return report


def _max_ray_curvature(trajs) -> float:
    worst = 0.0
    for tr in trajs:
        ts = tr.times(64)
        xs = np.array([tr.state(t).x for t in ts])
        v = np.gradient(xs, ts, axis=0)
        a = np.gradient(v, ts, axis=0)
        speed = np.linalg.norm(v, axis=1)
        cross = np.abs(v[:, 0] * a[:, 1] - v[:, 1] * a[:, 0])
        worst = max(worst, float((cross / np.maximum(speed, 1e-12) ** 3).max()))
    return worst


def _front_envelope(trajs, t: float, n: int = 192) -> Field2D:
    """|sum of beams| sampled coarsely (the envelope varies on the beam
    width scale, not the carrier scale)."""
    xs = np.array([tr.state(t).x for tr in trajs if tr.in_window(t)])
    if len(xs) == 0:
        raise NumericalFailure(f"no beams alive at t={t}")
    lo = xs.min(axis=0) - 1.0
    hi = xs.max(axis=0) + 1.0
    grid = Grid2D.from_bounds(lo[0], hi[0], lo[1], hi[1], n, n)
    from .beams import beam_eval

    vals = np.zeros((n, n), dtype=complex)
    pts = grid.points()
    for tr in trajs:
        if tr.in_window(t):
            vals += beam_eval(tr, t, pts)
    return Field2D(grid, np.abs(vals).astype(complex), t)


def _write_gnuplot_script(out_dir: Path) -> None:
    (out_dir / "plot.gp").write_text(
        "# gnuplot script for the front snapshots\n"
        "set datafile separator ','\n"
        "set view map\n"
        "splot 'front_*.csv' using 1:2:(sqrt($3*$3+$4*$4)) with points pt 5 ps 0.4 palette\n"
    )


# ---------------------------------------------------------------------------
# Convergence scenarios
# ---------------------------------------------------------------------------


def _innermost_direction_index(cover, j: int, direction: np.ndarray) -> int:
    pts = cover.centers[j]
    rad = np.linalg.norm(pts, axis=1)
    ring = np.nonzero(rad < rad.min() * 1.05)[0]
    dirs = pts[ring] / rad[ring, None]
    return int(ring[np.argmax(dirs @ direction)])


def _fd_error_estimate(fine_snaps, coarse_snaps, half_plane: bool) -> float:
    """Richardson estimate of the fine-run error from a 2x-coarser run.

    The production scheme is fourth order in time (the dominant error), so
    err_fine ~ ||fine - coarse|| / (2^4 - 1); using the lower order of the
    mixed scheme keeps the estimate conservative.
    """
    rep = energy_norm_error(
        [restrict_snapshot(s, 2) for s in fine_snaps], coarse_snaps, half_plane
    )
    return rep.combined / 15.0


def run_ivp_scale(config: ScenarioConfig, j: int, out_dir: Path | None = None) -> dict:
    """One scale of the whole-space convergence protocol.

    A single scale-j packet (position data only) evolves over T ~ 2^-j; the
    beam pair is compared against the interior solver in the combined energy
    norm, normalized by the discrete H1 norm of the data.
    """
    t0 = time.time()
    velocity = config.velocity()
    cover = config.cover(j_max=j)
    lattice = config.lattice(cover)
    k = _innermost_direction_index(cover, j, np.array([0.97, 0.243]))
    gamma = FrameIndex(j, k, 0, 0)
    p_norm = float(np.linalg.norm(cover.center(j, k)))
    c_max = velocity.derivative_bounds([-1, -1], [1, 1])["c_max"]

    T = 1.5 * 2.0**-j
    fmax = p_norm + 1.6 * 2.0**j
    dx = 1.0 / (fmax * config.fd_ppw)
    half_w = c_max * T + 2.8 * 2.0**-j + (config.sponge_cells + 6) * dx
    N = int(math.ceil(2 * half_w / dx))
    N += N % 2
    dt = config.fd_cfl * dx / (c_max * math.sqrt(2.0))
    grid = Grid2D(N, N, -N * dx / 2, -N * dx / 2, dx, dx)
    fdg = FdGrid(N, N, dx, dx, dt, grid.x0, grid.y0, config.sponge_cells, config.sponge_strength)

    f = Field2D(grid, packet_eval(gamma, lattice, cover, grid.points()))
    gz = Field2D.zeros(grid)
    times = np.linspace(0.25 * T, T, 5)
    sol = fd_solve_ivp(
        f, gz, velocity, fdg, T * 1.05, times, config.fd_order, config.fd_time_order
    )

    # coarse companion run for the discretization-error estimate
    Nc = N // 2
    fdg_c = FdGrid(
        Nc, Nc, 2 * dx, 2 * dx, 2 * dt, grid.x0, grid.y0,
        max(config.sponge_cells // 2, 10), config.sponge_strength,
    )
    grid_c = fdg_c.grid2d()
    f_c = Field2D(grid_c, f.values[::2, ::2][:Nc, :Nc])
    sol_c = fd_solve_ivp(
        f_c, Field2D.zeros(grid_c), velocity, fdg_c, T * 1.05,
        [s.t for s in sol.snapshots], config.fd_order, config.fd_time_order,
    )
    fd_err = _fd_error_estimate(sol.snapshots, sol_c.snapshots, half_plane=False)

    coeffs = CoefficientSet({gamma: 1.0})
    par = build_ivp(coeffs, CoefficientSet(), velocity, cover, lattice, T * 1.05,
                    config.rtol, config.atol)
    par_snaps = [
        WaveSnapshot(s.t, eval_ivp(par, s.t, grid), eval_ivp_dt(par, s.t, grid))
        for s in sol.snapshots
    ]
    rep = energy_norm_error(par_snaps, sol.snapshots, half_plane=False)
    data_norm = _h1_norm_diff(f.values, grid)
    out = {
        "j": j,
        "xi_min": 4.0**j,
        "gamma": tuple(gamma),
        "grid_n": N,
        "T": T,
        "combined_error": rep.combined,
        "normalized_error": rep.combined / data_norm,
        "fd_error_estimate": fd_err / data_norm,
        "data_norm": data_norm,
        "per_slice": rep.per_slice,
        "elapsed_s": time.time() - t0,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_manifest(out_dir / f"ivp_j{j}.txt", {k: v for k, v in out.items() if k != "per_slice"})
    return out


def run_dirichlet_scale(config: ScenarioConfig, j: int, out_dir: Path | None = None) -> dict:
    """One scale of the half-space convergence protocol.

    A single boundary packet anchored at t_gamma = 3.25 * 2^-j (compatible
    with zero data at t = 0) is matched and back-propagated; the parametrix
    is compared with the lifted Dirichlet solver over the right half plane.
    """
    t0 = time.time()
    velocity = config.velocity()
    cover = config.cover(j_max=j)
    lattice = config.lattice(cover)
    k = _innermost_direction_index(cover, j, np.array([-0.985, 0.174]))
    l1 = int(round(3.25 * lattice.n))  # t_gamma = 3.25 * 2^-j
    gamma = FrameIndex(j, k, l1, 0)
    t_gamma = l1 * lattice.step * 2.0**-j
    T = 5.5 * 2.0**-j
    spec = CutoffSpec(
        t_lo=1.5 * 2.0**-j, t_hi=4.75 * 2.0**-j, graze_threshold=config.graze_threshold
    )
    c_turn, worst = cone_condition_check(
        velocity, T, angle_floor=0.3, x2_samples=np.linspace(-0.3, 0.3, 3), n_angles=4,
        rtol=1e-8,
    )
    if c_turn <= 0:
        raise NumericalFailure(f"cone condition failed: {worst}")

    raw = CoefficientSet({gamma: 1.0})
    coeffs, report = apply_cutoff(raw, spec, velocity, cover, lattice)
    if len(coeffs) == 0:
        raise NumericalFailure("scenario packet removed by the grazing cut-off")

    c_max = velocity.derivative_bounds([-1, -1], [1, 1])["c_max"]
    p_norm = float(np.linalg.norm(cover.center(j, k)))
    fmax = p_norm + 1.6 * 2.0**j
    dx = 1.0 / (fmax * config.fd_ppw)
    w1 = c_max * (T - t_gamma) + 2.8 * 2.0**-j + (config.sponge_cells + 6) * dx
    w2 = 2 * (2.8 * 2.0**-j + 0.35 * c_max * T) + 2 * (config.sponge_cells + 6) * dx
    nx = int(math.ceil(w1 / dx)) + 1
    nx += (nx + 1) % 2  # odd count so the 2x-coarse grid shares its nodes
    ny = int(math.ceil(w2 / dx))
    ny += ny % 2
    dt = config.fd_cfl * dx / (c_max * math.sqrt(2.0))
    fdg = FdGrid(nx, ny, dx, dx, dt, 0.0, -ny * dx / 2, config.sponge_cells, config.sponge_strength)

    bdata = boundary_data_from_packets(coeffs, cover, lattice)
    times = np.linspace(t_gamma - 0.5 * 2.0**-j, T * 0.97, 6)
    sol = fd_solve_dirichlet(
        bdata, velocity, fdg, T, times, config.fd_order, config.fd_time_order
    )
    nxc, nyc = nx // 2 + 1, ny // 2
    fdg_c = FdGrid(
        nxc, nyc, 2 * dx, 2 * dx, 2 * dt, 0.0, fdg.y0,
        max(config.sponge_cells // 2, 10), config.sponge_strength,
    )
    sol_c = fd_solve_dirichlet(
        bdata, velocity, fdg_c, T, [s.t for s in sol.snapshots],
        config.fd_order, config.fd_time_order,
    )
    fine_r = [restrict_snapshot(s, 2) for s in sol.snapshots]
    coarse_trim = [
        WaveSnapshot(
            s.t,
            Field2D(fine_r[0].u.grid, s.u.values[: fine_r[0].u.grid.nx, : fine_r[0].u.grid.ny], s.t),
            Field2D(fine_r[0].u.grid, s.du_dt.values[: fine_r[0].u.grid.nx, : fine_r[0].u.grid.ny], s.t),
        )
        for s in sol_c.snapshots
    ]
    fd_err = energy_norm_error(fine_r, coarse_trim, half_plane=True).combined / 15.0

    par = dm.build_dirichlet(coeffs, report, velocity, cover, lattice, T,
                             config.rtol, config.atol)
    grid = fdg.grid2d()
    par_snaps = [
        WaveSnapshot(s.t, dm.eval_dirichlet(par, s.t, grid), dm.eval_dirichlet_dt(par, s.t, grid))
        for s in sol.snapshots
    ]
    rep = energy_norm_error(par_snaps, sol.snapshots, half_plane=True)

    # boundary-trace H1 normalization on the packet's own (t, x2) patch
    r = 6.0 * 2.0**-j
    t_axis = np.linspace(max(t_gamma - r, 0), t_gamma + r, 256)
    x2_axis = np.linspace(-r, r, 256)
    from .dirichlet import packet_slice

    hv = packet_slice(gamma, cover, lattice, t_axis, x2_axis)
    ht = packet_slice(gamma, cover, lattice, t_axis, x2_axis, "t")
    hx = packet_slice(gamma, cover, lattice, t_axis, x2_axis, "x2")
    area = (t_axis[1] - t_axis[0]) * (x2_axis[1] - x2_axis[0])
    h_norm = math.sqrt(
        float((np.abs(hv) ** 2 + np.abs(ht) ** 2 + np.abs(hx) ** 2).sum() * area)
    )

    init_h1, init_dt = dm.initial_time_residual(par, grid)
    trace_res = dm.boundary_trace_residual(par, coeffs, cover, lattice, t_axis, x2_axis)
    out = {
        "j": j,
        "xi_min": 4.0**j,
        "gamma": tuple(gamma),
        "t_gamma": t_gamma,
        "grid_nx_ny": (nx, ny),
        "T": T,
        "c_turn": c_turn,
        "combined_error": rep.combined,
        "normalized_error": rep.combined / h_norm,
        "fd_error_estimate": fd_err / h_norm,
        "h_norm": h_norm,
        "initial_h1": init_h1 / h_norm,
        "initial_dt_l2": init_dt / h_norm,
        "boundary_trace_residual": trace_res / h_norm,
        "well_spread_pass": par.well_spread.all_pass if par.well_spread else None,
        "per_slice": rep.per_slice,
        "elapsed_s": time.time() - t0,
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        save_manifest(out_dir / f"dirichlet_j{j}.txt", {k: v for k, v in out.items() if k != "per_slice"})
        dm.save_matched_csv(out_dir / f"matched_j{j}.csv", par)
    return out


def fit_rate(rows: list[dict]) -> dict:
    """Least-squares slope of log(normalized error) vs log(xi_min)."""
    if len(rows) < 2:
        raise ConfigError("rate fit needs at least two scales")
    x = np.log([r["xi_min"] for r in rows])
    y = np.log([r["normalized_error"] for r in rows])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope, intercept = coef
    n = len(x)
    if n > 2:
        sigma2 = float(res[0]) / (n - 2) if res.size else 0.0
        se = math.sqrt(sigma2 / float(np.sum((x - x.mean()) ** 2)))
    else:
        se = 0.0
    return {
        "slope": float(slope),
        "intercept": float(intercept),
        "slope_stderr": se,
        "slope_ci95": (float(slope - 1.96 * se), float(slope + 1.96 * se)),
    }


def run_convergence(
    config: ScenarioConfig, kind: str, out_dir: Path | None = None
) -> dict:
    """Run the per-scale protocol over config.scales and fit the rate."""
    runner = {"ivp": run_ivp_scale, "dirichlet": run_dirichlet_scale}[kind]
    rows = [runner(config, j, out_dir) for j in sorted(config.scales)]
    fit = fit_rate(rows)
    out = {
        "kind": kind,
        "rows": rows,
        "fit": fit,
        "min_parametrix_error": min(r["normalized_error"] for r in rows),
        "max_fd_estimate": max(r["fd_error_estimate"] for r in rows),
    }
    out["fd_gate"] = out["max_fd_estimate"] <= 0.2 * out["min_parametrix_error"]
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / f"convergence_{kind}.csv", "w") as fh:
            fh.write("j,xi_min,normalized_error,fd_error_estimate\n")
            for r in rows:
                fh.write(
                    f"{r['j']},{r['xi_min']},{r['normalized_error']!r},{r['fd_error_estimate']!r}\n"
                )
        save_manifest(out_dir / f"convergence_{kind}.txt", {**fit, "fd_gate": out["fd_gate"]})
    return out
