"""Scenario configuration: structured text (key = value, nested tables).

Format: INI-like sections with ``[table]`` headers and ``key = value``
lines; values are parsed as booleans, integers, floats, quoted strings, or
bracketed lists thereof.  Comments start with ``#``.  The documented schema
is rendered by :func:`default_config_text`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .frame import DEFAULT_BALL_FACTOR, LatticeSpec, build_cover
from .velocity import VelocityModel, make_velocity


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


def _parse_scalar(tok: str):
    tok = tok.strip()
    if tok.lower() in ("true", "false"):
        return tok.lower() == "true"
    if tok.startswith('"') and tok.endswith('"'):
        return tok[1:-1]
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        raise ConfigError(f"cannot parse value {tok!r}")


def parse_config_text(text: str) -> dict:
    """Parse the key = value / [table] format into nested dicts."""
    out: dict = {}
    table = out
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: empty table name")
            table = out.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if val.startswith("[") and val.endswith("]"):
            inner = val[1:-1].strip()
            table[key] = [_parse_scalar(t) for t in inner.split(",")] if inner else []
        else:
            table[key] = _parse_scalar(val)
    return out


@dataclass
class ScenarioConfig:
    """Validated scenario parameters shared by the CLI commands."""

    velocity_kind: str = "constant"
    velocity_params: dict = dataclass_field(default_factory=lambda: {"c0": 1.0})
    dimension: int = 2
    j_max: int = 4
    lattice_n: int = 4
    ball_factor: float = DEFAULT_BALL_FACTOR
    waveform_alpha: float = 1.0
    cutoff_t_lo: float = 0.1
    cutoff_t_hi: float = 0.9
    graze_threshold: float = 0.1
    scales: list = dataclass_field(default_factory=lambda: [2, 3, 4])
    fd_order: int = 8
    fd_time_order: int = 4
    fd_ppw: float = 15.0
    fd_cfl: float = 0.30
    sponge_cells: int = 30
    sponge_strength: float = 50.0
    rtol: float = 1e-10
    atol: float = 1e-12
    seed: int = 0
    T: float = 1.0
    out_dir: str = "out"

    def __post_init__(self) -> None:
        if self.dimension != 2:
            raise ConfigError("only dimension 2 is supported by the CLI")
        if self.j_max < 1:
            raise ConfigError("j_max must be >= 1")
        if self.lattice_n < 0:
            raise ConfigError("lattice_n must be positive (0 selects automatically)")
        if not 0 < self.cutoff_t_lo < self.cutoff_t_hi:
            raise ConfigError("need 0 < cutoff_t_lo < cutoff_t_hi")
        if any(j < 1 or j > self.j_max for j in self.scales):
            raise ConfigError("scales must lie in [1, j_max]")
        if len(set(self.scales)) != len(self.scales):
            raise ConfigError("scales must be distinct")
        if self.fd_ppw < 4:
            raise ConfigError("fewer than 4 points per wavelength cannot resolve waves")
        if self.fd_cfl <= 0 or self.fd_cfl > 0.9:
            raise ConfigError("fd_cfl must lie in (0, 0.9]")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        kw = {}
        vel = data.get("velocity", {})
        if vel:
            kw["velocity_kind"] = vel.get("kind", "constant")
            kw["velocity_params"] = {k: v for k, v in vel.items() if k != "kind"}
        frame = data.get("frame", {})
        for src, dst in (
            ("j_max", "j_max"),
            ("lattice_n", "lattice_n"),
            ("ball_factor", "ball_factor"),
            ("waveform_alpha", "waveform_alpha"),
            ("dimension", "dimension"),
        ):
            if src in frame:
                kw[dst] = frame[src]
        cut = data.get("cutoff", {})
        for src, dst in (
            ("t_lo", "cutoff_t_lo"),
            ("t_hi", "cutoff_t_hi"),
            ("graze_threshold", "graze_threshold"),
        ):
            if src in cut:
                kw[dst] = cut[src]
        fd = data.get("fd", {})
        for src, dst in (
            ("order", "fd_order"),
            ("time_order", "fd_time_order"),
            ("ppw", "fd_ppw"),
            ("cfl", "fd_cfl"),
            ("sponge_cells", "sponge_cells"),
            ("sponge_strength", "sponge_strength"),
        ):
            if src in fd:
                kw[dst] = fd[src]
        run = data.get("run", {})
        for src, dst in (
            ("scales", "scales"),
            ("T", "T"),
            ("seed", "seed"),
            ("out_dir", "out_dir"),
            ("rtol", "rtol"),
            ("atol", "atol"),
        ):
            if src in run:
                kw[dst] = run[src]
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(parse_config_text(fh.read()))

    def velocity(self) -> VelocityModel:
        params = dict(self.velocity_params)
        if self.velocity_kind == "gaussian_lens" and "center" not in params:
            params["center"] = (params.pop("center1", 0.0), params.pop("center2", 5.0))
        try:
            return make_velocity(self.velocity_kind, **params)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad velocity spec: {exc}") from exc

    def cover(self, j_max: int | None = None):
        return build_cover(
            self.dimension,
            j_max if j_max is not None else self.j_max,
            ball_factor=self.ball_factor,
            alpha=self.waveform_alpha,
        )

    def lattice(self, cover=None) -> LatticeSpec:
        if self.lattice_n >= 1:
            return LatticeSpec(self.lattice_n)
        from .frame import select_lattice

        return select_lattice(cover if cover is not None else self.cover())


def default_config_text() -> str:
    """The documented configuration schema with the shipped defaults."""
    return """\
# beamframe scenario configuration (key = value; nested tables in brackets)

[velocity]
kind = "constant"        # constant | gaussian_lens | table
c0 = 1.0                 # constant: speed
# base = 2.0             # gaussian_lens: background speed
# depth = 0.4            #   lens depth (base - depth at the center)
# center1 = 0.0          #   lens center
# center2 = 5.0
# width = 3.0            #   squared width
# path = "speeds.csv"    # table: csv grid file

[frame]
dimension = 2
j_max = 4
lattice_n = 4            # 0 selects the smallest admissible n
ball_factor = 0.30       # frequency-cover packing density
waveform_alpha = 1.0     # Gaussian width (figure-parity runs use 5.545)

[cutoff]
t_lo = 0.1
t_hi = 0.9
graze_threshold = 0.1

[fd]
order = 8                # spatial stencil order: 2, 4, 8
time_order = 4           # 2 (plain leapfrog) or 4 (modified equation)
ppw = 15.0               # grid points per shortest wavelength
cfl = 0.30
sponge_cells = 30
sponge_strength = 50.0

[run]
scales = [2, 3, 4]
T = 1.0
seed = 0
out_dir = "out"
rtol = 1e-10
atol = 1e-12
"""
