"""Reservoir-enhanced discrete gradient integration for planar dissipative systems."""

from .dgrad import DGradPair, itoh_abe_dgrad, validate_closed_forms
from .integrators import (
    DivergenceError,
    IncompatibleSchemeError,
    IntegrationError,
    SolverConfig,
    StallError,
    Starred,
    StepResult,
    Trajectory,
    attach_reservoir,
    exact_trajectory,
    generate_reference,
    integrate,
    step_en_gr,
    step_euler,
    step_imr,
    step_rk4_38,
    step_st_gr,
    step_sv,
)
from .model import (
    PhaseState,
    SystemKind,
    SystemModel,
    eval_K,
    exact_damped_harmonic,
    make_conservative,
    make_damped_harmonic,
    make_duffing,
    make_system,
    make_van_der_pol,
)

__version__ = "0.1.0"
