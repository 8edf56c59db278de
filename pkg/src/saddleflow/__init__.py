"""Projected primal-dual (saddle) flows for convex programs.

The flow ``z' = [F(z)]_Z`` on ``Z = X x R^m_+`` seeks saddle points of the
augmented Lagrangian ``f + mu^T g + rho/2 ||max(0, g)||^2``.  The package
integrates it, certifies KKT points, checks the monotonicity and
dissipation properties behind its convergence, and detects the limit
cycles that appear without augmentation.
"""

from .analysis import (
    CycleVerdict,
    HamiltonianSystem,
    MonotonicityReport,
    ZeroDissipationReport,
    analytic_orbit,
    detect_cycle,
    dissipation,
    hamiltonian_reduction,
    monotonicity_gap,
    zero_dissipation_checks,
)
from .errors import (
    ConfigurationError,
    ConsistencyError,
    DimensionError,
    PreconditionError,
    ProjectionError,
    SaddleFlowError,
    UnsupportedError,
)
from .flow import IntegratorConfig, Trajectory, integrate, lie_derivative_estimate, step
from .oracle import SolutionSet, enumerate_kkt, finite_diff_gradients
from .problem import (
    Affine,
    Problem,
    Quadratic,
    SolutionCertificate,
    State,
    eval_lagrangian,
    grad_lagrangian,
    is_equilibrium,
    kkt_certificate,
    projected_field,
    saddle_field,
)
from .schema import RunConfig, parse_problem_file, parse_run_config, serialize_problem
from .sets import (
    ActiveIndexSet,
    Box,
    NonnegOrthant,
    Polyhedron,
    ProductSet,
    WholeSpace,
    active_normals,
    active_set,
    euclidean_project,
    normal_cone_contains,
    normal_cone_distance,
    tangent_cone_project,
)

__version__ = "0.1.0"
