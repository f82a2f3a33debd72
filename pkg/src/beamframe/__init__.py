"""Gaussian beam parametrices for the 2D wave equation on a wave-packet
frame: frame transforms, beam propagation, whole-space and half-space
(Dirichlet) approximate solutions, and an independent finite-difference
reference solver."""

from .fields import Field2D, Grid2D, read_field, write_field
from .frame import (
    CoefficientSet,
    FrameIndex,
    FrequencyCover,
    LatticeSpec,
    analyze,
    build_cover,
    daubechies_defect,
    frame_bounds,
    invert_frame,
    overlap_control,
    packet_eval,
    select_lattice,
    synthesize,
)
from .velocity import (
    ConstantVelocity,
    GaussianLens,
    TabulatedVelocity,
    VelocityModel,
    caustic_lens,
    make_velocity,
)
from .beams import (
    BeamParams,
    BeamTrajectory,
    beam_eval,
    caustic_indicator,
    check_well_spread,
    propagate,
    standard_params,
    time_derivative_eval,
    wave_residual,
)
from .cutoff import CutoffSpec, apply_cutoff, cone_condition_check, almost_diag_residual
from .ivp import build_ivp, eval_ivp, eval_ivp_dt, ivp_error_report
from .dirichlet import (
    DirichletParametrix,
    boundary_riccati_matrix,
    boundary_restriction_residual,
    build_dirichlet,
    eval_dirichlet,
    match_packet,
)
from .fdwave import (
    BoundaryData,
    FdGrid,
    boundary_data_from_packets,
    energy_norm_error,
    fd_solve_dirichlet,
    fd_solve_ivp,
)
from .config import ScenarioConfig

__version__ = "0.1.0"
