"""Conformally flat H-minimal Lagrangian immersions and tori in CP^3.

Pipeline: five real moduli (a, b, c1, c2, c3) -> derived constants and the
spectral cubic (:mod:`params`) -> periodic profile u(z) (:mod:`profile`) ->
phase factors and windings (:mod:`phases`) -> the map psi, frames and
connection (:mod:`immersion`) -> residual certification (:mod:`verify`).
Torus search, sampling/export and the command line live in :mod:`search`,
:mod:`export` and :mod:`cli`.
"""

from .errors import (
    ComplexRootsError,
    DegenerateRootError,
    HMLError,
    IdentityViolationError,
    InvalidParameterError,
    MultipleRootError,
    NegativeRadicandError,
    NonPositiveCError,
    NoOscillationError,
    QuadratureNonConvergence,
    UnclosedTorusWarning,
    ZeroVectorError,
)
from .immersion import (
    ImmersionData,
    build_connection,
    build_immersion,
    eval_frame,
    eval_psi,
    fubini_study_distance,
    hopf_project,
    xy_periods,
)
from .params import (
    DerivedConstants,
    ModuliParams,
    SpectralData,
    compute_betas,
    compute_gammas,
    derive_constants,
    solve_spectral_cubic,
    spectral_data,
)
from .phases import PhaseData, amplitude_H, phase_G, phase_P, rationalize_winding, windings
from .profile import (
    ProfileSolution,
    TurningPoints,
    compute_period,
    energy_residual,
    find_turning_points,
    oscillation_exists,
    solve_profile,
)
from .verify import CertificationConfig, CertificationReport, run_certification

__version__ = "0.1.0"
