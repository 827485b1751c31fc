"""Numerics for prescribing the Gauss curvature of a metric conformal to the round sphere."""

from .continuation import Branch, ContinuationOptions, LinearPath, continuation
from .curvature import functional_J, gauss_bonnet_defect, gauss_curvature
from .errors import NirenbergError
from .morse import MorseReport, classify_regions, degree, find_critical_points
from .obstruction import kw_vector, large_linear_sweep, sign_certificate
from .solver import (
    SolveOptions,
    SolveResult,
    flow_solve,
    hersch_eigenvalue,
    linearization_spectrum,
    morse_index,
    multistart_enumerate,
    newton_solve,
    solve_symmetric,
)
from .sphere import SpectralField, analyze, make_grid, synthesize

__all__ = [
    "Branch",
    "ContinuationOptions",
    "LinearPath",
    "continuation",
    "functional_J",
    "gauss_bonnet_defect",
    "gauss_curvature",
    "NirenbergError",
    "MorseReport",
    "classify_regions",
    "degree",
    "find_critical_points",
    "kw_vector",
    "large_linear_sweep",
    "sign_certificate",
    "SolveOptions",
    "SolveResult",
    "flow_solve",
    "hersch_eigenvalue",
    "linearization_spectrum",
    "morse_index",
    "multistart_enumerate",
    "newton_solve",
    "solve_symmetric",
    "SpectralField",
    "analyze",
    "make_grid",
    "synthesize",
]
