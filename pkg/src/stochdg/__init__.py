"""Invariant-preserving discrete-gradient integrators for Stratonovich SDEs.

The public surface re-exports the building blocks: problem definitions and
skew-gradient forms, Brownian increments, averaged-gradient strategies, one-step
maps, splitting plans and the Monte Carlo study harness.
"""

from .core import (
    CommutativityReport,
    Invariant,
    SdeProblem,
    SkewGradientForm,
    build_skew_gradient_form,
    check_commutativity,
    check_form,
    check_problem,
    fd_jacobian,
    ito_corrected_drift,
    lambda_op,
)
from .engine import backend_name, compiled_available, simulate
from .errors import (
    ConfigError,
    DomainError,
    NonConvergenceError,
    SingularFormError,
    StepError,
    StochDGError,
    StudyFailure,
)
from .harness import (
    StudyConfig,
    StudyReport,
    adaptive_weak_study,
    fit_slope,
    invariant_drift_study,
    read_csv,
    run_study,
    strong_error_study,
    weak_error_study,
    write_csv,
)
from .integrators import (
    SCHEMES,
    SchemeConfig,
    SolverConfig,
    Trajectory,
    conservative_step,
    euler_maruyama_step,
    fixed_point_solve,
    integrate_path,
    make_stepper,
    milstein_step,
    stochastic_midpoint_step,
)
from .noise import (
    BrownianLattice,
    MomentReport,
    TruncationPolicy,
    coarsen,
    generate_increments,
    generate_lattice,
    moment_report,
    truncate_increment,
)
from .problems import (
    ProblemSpec,
    build_problem,
    cyclic_lotka_volterra,
    pendulum,
    problem_names,
    quadratic_fixture,
    quartic_fixture,
)
from .quadrature import (
    ExactAverage,
    QuadratureAverage,
    QuadratureRule,
    SeparableCoordinate,
    averaged_gradient,
    builtin_rule,
    parse_strategy,
    verify_order,
)
from .splitting import PlanReport, SplittingPlan, SubSystem, composition_step, pairwise_split, validate_plan

__version__ = "0.1.0"
