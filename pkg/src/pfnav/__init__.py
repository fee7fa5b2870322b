"""Density-based navigation with probabilistic safety constraints.

Learns Perron-Frobenius operator approximations from trajectory snapshots,
solves convex density-feasibility problems for verification and controller
synthesis, and validates closed loops by simulation and Monte-Carlo
collision estimation.
"""

from .basis import (
    CoefVector,
    RbfBasis,
    Region,
    ball_region,
    box_region,
    complement_region,
    gram_lambda,
    implicit_region,
    intersection_region,
    mass_matrix_d,
    project_density,
    union_region,
)
from .config import Scenario, builtin_config, example2_config, load_config, validate_config
from .controller import ClosedLoopSystem, NavigationController, linearize, lqr_gain
from .dynamics import (
    Box,
    SnapshotSet,
    Trajectory,
    VectorField,
    example1_fields,
    example2_fields,
    expression_field,
    flow_step,
    generate_snapshots,
    grid_sampling,
    random_sampling,
    simulate,
)
from .kernels import backend_name, has_compiled_backend
from .operator import (
    NsdmdOptions,
    OperatorApprox,
    SolverReport,
    edmd,
    learn_generators,
    nsdmd,
    nsdmd_from_matrices,
    project_row_simplex,
)
from .safety import (
    HazardModel,
    HazardPiece,
    McReport,
    box_sampler,
    collision_probability_mc,
    eval_p,
    occupancy_fraction,
    region_rejection_sampler,
)
from .synthesis import (
    DensityPair,
    LpResult,
    SafetyProblem,
    SynthesisOutcome,
    lp_solve,
    residual_report,
    synthesize,
    verify_autonomous,
)

__version__ = "0.1.0"
