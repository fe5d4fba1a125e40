"""boundaryflow: invariant-set boundaries of nonautonomous differential
inclusions x' in B_rho(f(t, x)), computed through the deterministic boundary
system on the unit normal bundle."""

from .core import (
    BoundaryFibre,
    BoundaryState,
    ControlSignal,
    FibreCloud,
    InvalidSystemError,
    SystemSpec,
    TimeInterval,
    ValidationReport,
    eval_control,
    hausdorff_distance,
    validate_system,
)
from .integrate import (
    BlowUpError,
    DivergenceError,
    IntegrationError,
    IntegratorConfig,
    TransitionMatrix,
    adjoint_solution,
    integrate_ode,
    transition_matrix,
)
from .linear import (
    AttractorBound,
    LinearField,
    NotExponentiallyStableError,
    StabilityCertificate,
    attractor_bound,
    certificate_from_row_dominance,
    constant_field,
    diagonal_field,
    fit_certificate,
    hyperbolic_solution,
    linear_system_spec,
    paper_example_field,
    row_dominance_check,
    sample_transition_norms,
)
from .boundary import (
    BoundaryField,
    NonConvergenceError,
    ReconstructionConfig,
    boundary_rhs,
    integrate_boundary,
    pullback_converge,
    reconstruct_fibre,
)
from .cloud import (
    CloudConfig,
    convex_hull_2d,
    evolve_cloud,
    sample_control,
    support_function,
)
from .verify import (
    PropertyReport,
    check_backward_invariance,
    check_convexity,
    check_gauss_injectivity,
    check_pullback_decay,
    check_scaling,
    check_symmetry,
)

__version__ = "0.1.0"
