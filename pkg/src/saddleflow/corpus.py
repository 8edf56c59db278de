"""Small convex test problems with known structure.

All dualized constraints are affine so that :func:`saddleflow.oracle.enumerate_kkt`
applies.  ``QUADRATIC_CONSTRAINT_PROBLEMS`` holds problems outside that class
together with their analytic solution.
"""

import numpy as np

from .problem import Affine, Problem, Quadratic, State
from .sets import Box, NonnegOrthant, Polyhedron, WholeSpace


def fig1(rho: float = 0.0) -> Problem:
    """``max x s.t. x <= 0`` written as ``min -x``; solution ``(0, 1)``."""
    return Problem(Affine([-1.0]), [Affine([1.0])], WholeSpace(1), rho=rho, name="fig1")


def fig1_two_constraints(rho: float = 0.0) -> Problem:
    """``min -x s.t. x <= 0, x - 5 <= 0``; solution ``(0, (1, 0))``."""
    return Problem(Affine([-1.0]), [Affine([1.0]), Affine([1.0], 5.0)], WholeSpace(1),
                   rho=rho, name="fig1-two-constraints")


def lp2d(rho: float = 0.0) -> Problem:
    """Vertex ``(1.6, 1.2)`` with multipliers ``(0.4, 0.2, 0, 0)``."""
    cons = [Affine([1.0, 2.0], 4.0), Affine([3.0, 1.0], 6.0),
            Affine([-1.0, 0.0], 0.0), Affine([0.0, -1.0], 0.0)]
    return Problem(Affine([-1.0, -1.0]), cons, WholeSpace(2), rho=rho, name="lp2d")


def lp3d(rho: float = 0.0) -> Problem:
    """``min sum(x)`` s.t. pairwise sums ``>= 1``; solution ``x = mu = (1/2, 1/2, 1/2)``."""
    cons = [Affine([-1.0, -1.0, 0.0], -1.0), Affine([0.0, -1.0, -1.0], -1.0),
            Affine([-1.0, 0.0, -1.0], -1.0)]
    return Problem(Affine([1.0, 1.0, 1.0]), cons, WholeSpace(3), rho=rho, name="lp3d")


def lp_box(rho: float = 0.0) -> Problem:
    """``min x1 - x2`` over ``[0, 1]^2`` with ``x1 + x2 >= 0.5``; solution ``(0, 1)``."""
    return Problem(Affine([1.0, -1.0]), [Affine([-1.0, -1.0], -0.5)],
                   Box([0.0, 0.0], [1.0, 1.0]), rho=rho, name="lp-box")


def lp_family(rho: float = 0.0) -> Problem:
    """``min -x1 s.t. x1 <= 0`` on R^2: every ``(0, t)`` is optimal."""
    return Problem(Affine([-1.0, 0.0]), [Affine([1.0, 0.0])], WholeSpace(2), rho=rho,
                   name="lp-family")


def qp_box(rho: float = 0.0) -> Problem:
    """Strictly convex distance to ``(2, -1)`` over ``[-1, 1]^2`` with ``x1 + x2 <= 0.5``."""
    Q = np.eye(2)
    c = np.array([2.0, -1.0])
    return Problem(Quadratic(Q, -c, 0.5 * c @ c), [Affine([1.0, 1.0], 0.5)],
                   Box([-1.0, -1.0], [1.0, 1.0]), rho=rho, name="qp-box")


def qp_orthant(rho: float = 0.0) -> Problem:
    Q = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]])
    q = np.array([-1.0, 1.0, -2.0])
    cons = [Affine([1.0, 1.0, 1.0], 1.0), Affine([1.0, -1.0, 0.0], 0.2)]
    return Problem(Quadratic(Q, q), cons, NonnegOrthant(3), rho=rho, name="qp-orthant")


def qp_polyhedron(rho: float = 0.0) -> Problem:
    """Hard set ``{x1 + x2 <= 1, x1 - x2 <= 1}``; objective pulls toward ``(2, 0.5)``."""
    c = np.array([2.0, 0.5])
    X = Polyhedron([[1.0, 1.0], [1.0, -1.0]], [1.0, 1.0])
    return Problem(Quadratic(np.eye(2), -c, 0.5 * c @ c), [Affine([0.0, 1.0], 0.25)], X,
                   rho=rho, name="qp-polyhedron")


def qp_singular(rho: float = 0.0) -> Problem:
    """Rank-one Hessian: ``(x1 - x2)^2/2 - x1 - x2`` with ``x1 <= 1, x2 <= 3``."""
    Q = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return Problem(Quadratic(Q, [-1.0, -1.0]), [Affine([1.0, 0.0], 1.0), Affine([0.0, 1.0], 3.0)],
                   WholeSpace(2), rho=rho, name="qp-singular")


def lp_two_sided(rho: float = 0.0) -> Problem:
    """``min x1 + 2 x2`` with ``x1 >= -1``, ``x2 >= 0`` dualized, ``x1 + x2 <= 3``; solution ``(-1, 0)``."""
    cons = [Affine([-1.0, 0.0], 1.0), Affine([0.0, -1.0], 0.0), Affine([1.0, 1.0], 3.0)]
    return Problem(Affine([1.0, 2.0]), cons, WholeSpace(2), rho=rho, name="lp-two-sided")


CORPUS = (fig1, fig1_two_constraints, lp2d, lp3d, lp_box, lp_family, qp_box, qp_orthant,
          qp_polyhedron, qp_singular, lp_two_sided)

# affine objectives on X = R^n with a unique, strictly complementary solution
NON_STRICT_CORPUS = (fig1, lp2d, lp3d)


def qp_disk(rho: float = 0.0) -> Problem:
    """``min x1 + x2`` on the unit disk (a quadratic constraint)."""
    return Problem(Affine([1.0, 1.0]), [Quadratic(2.0 * np.eye(2), [0.0, 0.0], -1.0)],
                   WholeSpace(2), rho=rho, name="qp-disk")


QUADRATIC_CONSTRAINT_PROBLEMS = (
    (qp_disk, State(np.full(2, -np.sqrt(0.5)), [np.sqrt(0.5)])),
)
