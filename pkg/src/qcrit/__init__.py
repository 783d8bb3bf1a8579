"""Desk-scale criticality toolkit for quasilinear second-order forms.

Energy functionals of the type

    Q[u] = integral( anorm(grad u)**p + V |u|**p )

on 1D and small 2D P1 meshes: Dirichlet solves, principal eigenpairs,
exhaustion-limit criticality probes, first-order divergence fields, Morrey
norms, and Green-type minimal-growth constructions, each paired with the
inequality checks that make the results auditable.
"""

from .mesh import (
    ExhaustionSchedule,
    GridFunction,
    Mesh,
    build_mesh_1d,
    build_mesh_1d_log,
    build_mesh_2d,
    gradient,
    grid_function_from_csv,
    grid_function_to_csv,
    integrate,
    make_exhaustion,
    mesh_from_csv,
    mesh_to_csv,
    midpoint_values,
    p_norm,
    submesh,
    zero_extend,
)
from .qcore import (
    MatrixField,
    PotentialField,
    ProblemSpec,
    anorm,
    energy,
    harnack_ratio,
    lindqvist_gap,
    lindqvist_integral,
    monotone_flux_gap,
    negative_part_subsolution_check,
    residual,
    residual_scale,
)
from .solver import (
    IterationTrace,
    SolveOptions,
    UnboundedBelowError,
    monotone_iteration,
    solve_dirichlet,
    wcp_check,
)
from .eigen import (
    EigenResult,
    maximum_principle_suite,
    principal_eigenpair,
    principal_eigenvalue,
    rayleigh_quotient,
    simplicity_probe,
)
from .morrey import (
    BallSampling,
    MorreyParams,
    morrey_adams_split,
    morrey_norm,
    morrey_norm_detail,
)
from .calibration import (
    CalibrationError,
    calibrate_all,
    constant_for,
    ensure_calibration,
    load_calibration,
    save_calibration,
)
from .criticality import (
    APField,
    CriticalityReport,
    ap_field,
    ap_nonnegativity_from_field,
    convex_combination_check,
    criticality_probe,
    default_perturbation,
    generalized_principal_eigenvalue,
    liouville_conditions,
    member_specs,
    perturbation_threshold,
    poincare_constant,
)
from .green import (
    GreenResult,
    SingularityProfile,
    classify_singularity,
    green_function,
    minimal_growth_solution,
    pole_flux,
)

__version__ = "0.1.0"

__all__ = [
    "ExhaustionSchedule",
    "GridFunction",
    "Mesh",
    "build_mesh_1d",
    "build_mesh_1d_log",
    "build_mesh_2d",
    "gradient",
    "grid_function_from_csv",
    "grid_function_to_csv",
    "integrate",
    "make_exhaustion",
    "mesh_from_csv",
    "mesh_to_csv",
    "midpoint_values",
    "p_norm",
    "submesh",
    "zero_extend",
    "MatrixField",
    "PotentialField",
    "ProblemSpec",
    "anorm",
    "energy",
    "harnack_ratio",
    "lindqvist_gap",
    "lindqvist_integral",
    "monotone_flux_gap",
    "negative_part_subsolution_check",
    "residual",
    "residual_scale",
    "IterationTrace",
    "SolveOptions",
    "UnboundedBelowError",
    "monotone_iteration",
    "solve_dirichlet",
    "wcp_check",
    "EigenResult",
    "maximum_principle_suite",
    "principal_eigenpair",
    "principal_eigenvalue",
    "rayleigh_quotient",
    "simplicity_probe",
    "BallSampling",
    "MorreyParams",
    "morrey_adams_split",
    "morrey_norm",
    "morrey_norm_detail",
    "CalibrationError",
    "calibrate_all",
    "constant_for",
    "ensure_calibration",
    "load_calibration",
    "save_calibration",
    "APField",
    "CriticalityReport",
    "ap_field",
    "ap_nonnegativity_from_field",
    "convex_combination_check",
    "criticality_probe",
    "default_perturbation",
    "generalized_principal_eigenvalue",
    "liouville_conditions",
    "member_specs",
    "perturbation_threshold",
    "poincare_constant",
    "GreenResult",
    "SingularityProfile",
    "classify_singularity",
    "green_function",
    "minimal_growth_solution",
    "pole_flux",
    "__version__",
]
