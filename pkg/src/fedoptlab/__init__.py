"""fedoptlab: a laboratory for federated optimization on synthetic convex problems.

Implements FedGD, FedProx and FedSplit (exact and inexact proximal
variants), closed-form fixed-point oracles for least squares, seeded
problem generators, and reproducible experiment drivers.
"""

from .blockvec import BlockVector, block_average, broadcast_add, reflect_consensus
from .losses import (
    ConvexityConstants,
    FederatedProblem,
    LogisticLoss,
    QuadraticLoss,
    ShiftedLoss,
    convexity_constants,
    loss_gradient,
    loss_value,
    moreau_gradient,
    read_problem_json,
    write_problem_json,
)
from .prox import (
    EXACT,
    ProxSolverSpec,
    prox_exact,
    prox_exact_quadratic,
    prox_inexact_gradient,
    prox_logistic_newton,
    reflected_prox,
)
from .algorithms import (
    AlgorithmSpec,
    Trace,
    run_algorithm,
    run_fedgd,
    run_fedprox,
    run_fedsplit,
    run_fedsplit_regularized,
    write_trace_csv,
    write_trace_meta,
)
from .analysis import (
    ReferenceSolution,
    contraction_rate,
    fedgd_limit_lsq,
    fedprox_limit_lsq,
    fixedpoint_residuals,
    iteration_complexity,
    lsq_optimum,
    reference_optimum,
)
from .datagen import (
    ConditionedLsqSpec,
    IsotropicLsqSpec,
    LogisticGaussSpec,
    gen_conditioned_lsq,
    gen_isotropic_lsq,
    gen_logistic,
    generate_problem,
    sample_haar_orthogonal,
)
from .errors import (
    ConfigError,
    DegenerateProblemError,
    DivergenceError,
    FedoptLabError,
    NonconvergenceError,
    NumericalError,
    StepsizeError,
)

__version__ = "0.1.0"
