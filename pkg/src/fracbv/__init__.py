"""Fractional bounded-variation calculi and denoising."""

from .approx import density_pipeline_gagliardo, density_pipeline_riesz, mollify, pair_mollify, recovery_sequence
from .denoise import (
    DenoiseProblem,
    DualVariable,
    SolveReport,
    predual_energy,
    primal_energy,
    project_feasible,
    recover_primal,
    solve_predual,
    solve_primal_reference,
    vi_residual,
)
from .errors import (
    CalibrationFailure,
    FracBVError,
    InvalidArgument,
    ParseError,
    ResolutionFailure,
    TruncationWarning,
    Unsupported,
)
from .gagliardo import (
    NonlocalField,
    frac_perimeter,
    gag_composition_check,
    gag_divergence,
    gag_gradient,
    gagliardo_seminorm,
)
from .grid import ConvexDomain, Grid, ScalarField, extend_by_zero, make_grid, periodic_grid, separation
from .riesz import (
    RieszVectorField,
    SpectralConfig,
    calibrate_constants,
    frac_laplacian,
    riesz_divergence,
    riesz_gradient,
    riesz_potential,
)
from .variation import lsc_check, theorem_equivalence_check, var_gagliardo, var_riesz

__version__ = "0.1.0"

__all__ = [
    "density_pipeline_gagliardo",
    "density_pipeline_riesz",
    "mollify",
    "pair_mollify",
    "recovery_sequence",
    "DenoiseProblem",
    "DualVariable",
    "SolveReport",
    "predual_energy",
    "primal_energy",
    "project_feasible",
    "recover_primal",
    "solve_predual",
    "solve_primal_reference",
    "vi_residual",
    "CalibrationFailure",
    "FracBVError",
    "InvalidArgument",
    "ParseError",
    "ResolutionFailure",
    "TruncationWarning",
    "Unsupported",
    "NonlocalField",
    "frac_perimeter",
    "gag_composition_check",
    "gag_divergence",
    "gag_gradient",
    "gagliardo_seminorm",
    "ConvexDomain",
    "Grid",
    "ScalarField",
    "extend_by_zero",
    "make_grid",
    "periodic_grid",
    "separation",
    "RieszVectorField",
    "SpectralConfig",
    "calibrate_constants",
    "frac_laplacian",
    "riesz_divergence",
    "riesz_gradient",
    "riesz_potential",
    "lsc_check",
    "theorem_equivalence_check",
    "var_gagliardo",
    "var_riesz",
]
