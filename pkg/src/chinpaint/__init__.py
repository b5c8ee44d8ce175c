"""Cahn-Hilliard image inpainting with the double obstacle potential.

Binary images evolve directly as a single phase field; grayscale images are
split into bitwise channels, each inpainted as a binary problem, then
reassembled. Each time step solves a variational inequality (or its
Moreau-Yosida regularization, or a quartic smooth variant) on a uniform
finite element grid, with a two-stage schedule that first grows bulk
regions at large interface width and then sharpens edges at small width.
"""

from .cli import (
    JobConfig,
    cli_main,
    job_schedule,
    parse_config,
    preset_path,
)
from .errors import (
    ChinpaintError,
    ConfigParseError,
    ConstraintViolationError,
    ImageFormatError,
    InvalidGridError,
    InvalidInputError,
    InvalidMaskError,
    InvalidParameterError,
    OracleFailure,
    ShapeMismatchError,
)
from .evolve import (
    DEFAULT_INNER_TOL,
    DEFAULT_MAX_STEPS,
    RunReport,
    StageParams,
    TwoStageConfig,
    run_stage,
    run_two_stage,
)
from .grid import (
    FidelityField,
    GridSpec,
    ScalarField,
    build_grid,
    field_from_image,
    image_from_field,
    lumped_inner,
    lumped_weights,
    make_fidelity,
    make_field,
    stiffness_apply,
)
from .images import Grayscale8Image, make_image, read_image, write_image
from .oracle import (
    DenseStepSystem,
    check_stationarity,
    energy_gradient_check,
    oracle_step_dense,
)
from .pipeline import (
    InpaintJob,
    InpaintResult,
    bit_assemble,
    bit_split,
    error_map,
    inpaint_binary,
    inpaint_grayscale,
    project_binary,
)
from .potentials import (
    PotentialSpec,
    beta_delta,
    beta_hat_delta,
    discrete_energy,
    moreau_yosida,
    obstacle,
    quartic,
    quartic_prime,
)
from .steps import (
    KKTReport,
    StepProblem,
    StepResult,
    kkt_residual,
    step_moreau_yosida,
    step_obstacle,
    step_problem,
    step_quartic,
)

__version__ = "0.1.0"

__all__ = [
    "Grayscale8Image",
    "GridSpec",
    "ScalarField",
    "FidelityField",
    "PotentialSpec",
    "StepProblem",
    "StepResult",
    "KKTReport",
    "StageParams",
    "TwoStageConfig",
    "RunReport",
    "InpaintJob",
    "InpaintResult",
    "JobConfig",
    "DenseStepSystem",
    "build_grid",
    "make_field",
    "make_fidelity",
    "make_image",
    "lumped_weights",
    "lumped_inner",
    "stiffness_apply",
    "field_from_image",
    "image_from_field",
    "beta_delta",
    "beta_hat_delta",
    "quartic_prime",
    "discrete_energy",
    "obstacle",
    "moreau_yosida",
    "quartic",
    "step_problem",
    "step_obstacle",
    "step_moreau_yosida",
    "step_quartic",
    "kkt_residual",
    "run_stage",
    "run_two_stage",
    "project_binary",
    "bit_split",
    "bit_assemble",
    "inpaint_binary",
    "inpaint_grayscale",
    "error_map",
    "read_image",
    "write_image",
    "parse_config",
    "job_schedule",
    "preset_path",
    "cli_main",
    "oracle_step_dense",
    "check_stationarity",
    "energy_gradient_check",
    "ChinpaintError",
    "InvalidGridError",
    "ShapeMismatchError",
    "InvalidParameterError",
    "ConstraintViolationError",
    "InvalidMaskError",
    "InvalidInputError",
    "ImageFormatError",
    "ConfigParseError",
    "OracleFailure",
    "DEFAULT_INNER_TOL",
    "DEFAULT_MAX_STEPS",
    "__version__",
]
