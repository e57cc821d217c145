"""Randomized low-rank Runge-Kutta integrators for matrix differential
equations, with a generalized Nystrom truncation, factored matrix arithmetic,
model problems, a high-order dense reference solver, and an experiment
harness."""

from .bench import (
    ExperimentConfig,
    Example1Report,
    RunRecord,
    SweepSummary,
    diagnose_tangent,
    emit_csv,
    example1_check,
    parse_method,
    run_experiment,
)
from .factored import (
    FactoredMatrix,
    DensifyGuardError,
    HadamardRankError,
    add,
    frobenius_distance,
    frobenius_norm,
    from_dense,
    from_pair,
    hadamard,
    orthonormalize,
    pad_to_rank,
    scale,
    to_dense,
    truncated_svd,
    zero,
)
from .integrators import (
    ButcherTableau,
    IntegrationError,
    IntegratorConfig,
    integrate,
    modified_rk4_step,
    order_conditions,
    prepare_initial,
    prk_step,
    rand_rk_step,
    tableau,
    tangent_project,
)
from .nystrom import (
    SketchDims,
    SketchPair,
    default_oversampling,
    draw_sketch_matrices,
    nystrom_approximate,
    nystrom_truncate,
    sketch,
    sketch_accumulate,
)
from .problems import (
    AllenCahnProblem,
    DiagonalToyProblem,
    ImagSchrodingerProblem,
    LyapunovProblem,
    NlsProblem,
    RhsOperator,
    make_problem,
    tangential_projection_error,
)
from .randgen import RngStream, derive_stream_id
from .reference import (
    AdaptiveSolverSettings,
    dense_rk4_solve,
    dormand_prince_solve,
    read_matrix_file,
    solve_reference,
    write_matrix_file,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveSolverSettings",
    "AllenCahnProblem",
    "ButcherTableau",
    "DensifyGuardError",
    "DiagonalToyProblem",
    "Example1Report",
    "ExperimentConfig",
    "FactoredMatrix",
    "HadamardRankError",
    "ImagSchrodingerProblem",
    "IntegrationError",
    "IntegratorConfig",
    "LyapunovProblem",
    "NlsProblem",
    "RhsOperator",
    "RngStream",
    "RunRecord",
    "SketchDims",
    "SketchPair",
    "SweepSummary",
    "add",
    "default_oversampling",
    "dense_rk4_solve",
    "derive_stream_id",
    "diagnose_tangent",
    "dormand_prince_solve",
    "draw_sketch_matrices",
    "emit_csv",
    "example1_check",
    "frobenius_distance",
    "frobenius_norm",
    "from_dense",
    "from_pair",
    "hadamard",
    "integrate",
    "make_problem",
    "modified_rk4_step",
    "nystrom_approximate",
    "nystrom_truncate",
    "order_conditions",
    "orthonormalize",
    "pad_to_rank",
    "parse_method",
    "prepare_initial",
    "prk_step",
    "rand_rk_step",
    "read_matrix_file",
    "run_experiment",
    "scale",
    "sketch",
    "sketch_accumulate",
    "solve_reference",
    "tableau",
    "tangent_project",
    "tangential_projection_error",
    "to_dense",
    "truncated_svd",
    "write_matrix_file",
    "zero",
]
