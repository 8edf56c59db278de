"""Convex problem data, augmented partial Lagrangian and the saddle vector field.

The problem is

    minimize f(x)  subject to  g(x) <= 0,  x in X

with ``g`` dualized (multipliers ``mu >= 0``) and ``X`` kept as a hard set.
The augmented partial Lagrangian is

    L(x, mu) = f(x) + mu^T g(x) + rho/2 * ||max(0, g(x))||^2

and the saddle field descends in ``x`` and ascends in ``mu``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, DimensionError
from .sets import (
    DEFAULT_EPS_ACT,
    ConvexSet,
    NonnegOrthant,
    ProductSet,
    normal_cone_distance,
    tangent_cone_project,
)

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
CERT_TOL = 1e-8
STRICT_COMP_TOL = 1e-6


class SmoothConvexFunction:
    """Convex C^1 function R^n -> R with closed-form value and gradient."""

    kind: str = "abstract"
    dim: int

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def hessian(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def strictly_convex(self) -> bool:
        return self.min_eigenvalue > 0.0

    @property
    def min_eigenvalue(self) -> float:
        return 0.0

    def as_quadratic(self) -> tuple[np.ndarray, np.ndarray, float]:
        """Return ``(Q, q, c0)`` with ``value(x) = x'Qx/2 + q'x + c0``."""
        raise NotImplementedError


class Quadratic(SmoothConvexFunction):
    """``x'Qx/2 + q'x + c0`` with ``Q`` symmetric positive semidefinite."""

    kind = "quadratic"

    def __init__(self, Q, q, c0: float = 0.0):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float))
        n = q.shape[0]
        if Q.shape != (n, n):
            raise DimensionError(f"Q has shape {Q.shape}, expected ({n}, {n})")
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(q)) and np.isfinite(c0)):
            raise ConfigurationError("quadratic coefficients must be finite")
        if np.max(np.abs(Q - Q.T), initial=0.0) > SYMMETRY_TOL:
            raise ConfigurationError("Q is not symmetric")
        eig = np.linalg.eigvalsh(Q) if n else np.zeros(0)
        lam_min = float(eig.min()) if n else 0.0
        if lam_min < -PSD_TOL:
            raise ConfigurationError(
                f"Q is not positive semidefinite (smallest eigenvalue {lam_min:.3g})"
            )
        scale = max(1.0, float(np.abs(eig).max())) if n else 1.0
        self._lam_min = lam_min if lam_min > 1e-12 * scale else 0.0
        self.Q = Q
        self.q = q
        self.c0 = float(c0)
        self.Q.setflags(write=False)
        self.q.setflags(write=False)
        self.dim = n

    def value(self, x):
        return float(0.5 * x @ self.Q @ x + self.q @ x + self.c0)

    def grad(self, x):
        return self.Q @ x + self.q

    @property
    def hessian(self):
        return self.Q

    @property
    def min_eigenvalue(self):
        return self._lam_min

    def as_quadratic(self):
        return self.Q, self.q, self.c0

    def __repr__(self):
        return f"Quadratic(Q={self.Q.tolist()}, q={self.q.tolist()}, c0={self.c0})"


class Affine(SmoothConvexFunction):
    """``a'x - b``."""

    kind = "affine"

    def __init__(self, a, b: float = 0.0):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        if a.ndim != 1:
            raise DimensionError("affine coefficient must be a vector")
        if not (np.all(np.isfinite(a)) and np.isfinite(b)):
            raise ConfigurationError("affine coefficients must be finite")
        self.a = a
        self.a.setflags(write=False)
        self.b = float(b)
        self.dim = a.shape[0]

    def value(self, x):
        return float(self.a @ x - self.b)

    def grad(self, x):
        return self.a.copy()

    @property
    def hessian(self):
        return np.zeros((self.dim, self.dim))

    def as_quadratic(self):
        return np.zeros((self.dim, self.dim)), np.array(self.a), -self.b

    def __repr__(self):
        return f"Affine(a={self.a.tolist()}, b={self.b})"


@dataclass(frozen=True, eq=False)
class State:
    """Primal-dual pair ``z = (x, mu)``."""

    x: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)).reshape(-1))

    @classmethod
    def from_vector(cls, z, n: int) -> "State":
        z = np.asarray(z, dtype=float)
        return cls(z[:n].copy(), z[n:].copy())

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.mu])

    def distance(self, other: "State") -> float:
        return float(np.linalg.norm(self.vector - other.vector))

    def __repr__(self):
        return f"State(x={self.x.tolist()}, mu={self.mu.tolist()})"


StateLike = Union[State, Sequence, np.ndarray]


@dataclass(frozen=True, eq=False)
class Problem:
    """``min f(x)`` s.t. ``g(x) <= 0`` (dualized), ``x in X`` (hard)."""

    objective: SmoothConvexFunction
    constraints: tuple[SmoothConvexFunction, ...]
    hard_set: ConvexSet
    rho: float = 0.0
    tau_x: float = 1.0
    tau_mu: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        n = self.objective.dim
        for i, g in enumerate(self.constraints):
            if g.dim != n:
                raise DimensionError(f"constraint {i} has dimension {g.dim}, objective has {n}")
        if self.hard_set.dim != n:
            raise DimensionError(f"hard set has dimension {self.hard_set.dim}, objective has {n}")
        if not (np.isfinite(self.rho) and self.rho >= 0.0):
            raise ConfigurationError(f"rho must be finite and >= 0, got {self.rho}")
        for label in ("tau_x", "tau_mu"):
            t = getattr(self, label)
            if not (np.isfinite(t) and t > 0.0):
                raise ConfigurationError(f"{label} must be finite and > 0, got {t}")

    @property
    def n(self) -> int:
        return self.objective.dim

    @property
    def m(self) -> int:
        return len(self.constraints)

    @cached_property
    def state_space(self) -> ProductSet:
        return ProductSet([self.hard_set, NonnegOrthant(self.m)])

    def with_rho(self, rho: float) -> "Problem":
        return replace(self, rho=float(rho))

    def g(self, x: np.ndarray) -> np.ndarray:
        return np.array([gi.value(x) for gi in self.constraints])

    def jac_g(self, x: np.ndarray) -> np.ndarray:
        """``n x m`` matrix whose columns are the constraint gradients."""
        if not self.constraints:
            return np.zeros((self.n, 0))
        return np.column_stack([gi.grad(x) for gi in self.constraints])

    @cached_property
    def packed(self) -> dict[str, np.ndarray]:
        """Dense coefficients: ``f = x'Q0x/2 + q0'x + c0``, ``g_i = x'Qg_i x/2 + Ag_i'x - bg_i``."""
        Q0, q0, c0 = self.objective.as_quadratic()
        n, m = self.n, self.m
        Qg = np.zeros((m, n, n))
        Ag = np.zeros((m, n))
        bg = np.zeros(m)
        for i, gi in enumerate(self.constraints):
            Qi, qi, ci = gi.as_quadratic()
            Qg[i], Ag[i], bg[i] = Qi, qi, -ci
        return {"Q0": np.array(Q0), "q0": np.array(q0), "c0": np.array(c0),
                "Qg": Qg, "Ag": Ag, "bg": bg}

    def as_state(self, z: StateLike) -> State:
        if isinstance(z, State):
            s = z
        elif isinstance(z, tuple) and len(z) == 2:
            s = State(*z)
        else:
            s = State.from_vector(np.asarray(z, dtype=float).reshape(-1), self.n)
        if s.x.shape != (self.n,) or s.mu.shape != (self.m,):
            raise DimensionError(
                f"state has shapes x{s.x.shape}, mu{s.mu.shape}; expected ({self.n},), ({self.m},)"
            )
        return s

    def __repr__(self):
        return (f"Problem(name={self.name!r}, n={self.n}, m={self.m}, rho={self.rho}, "
                f"X={self.hard_set!r})")


@dataclass(frozen=True, eq=False)
class SolutionCertificate:
    """KKT residuals of a candidate primal-dual pair."""

    z_star: State
    stationarity_residual: float
    feasibility_residual: float
    complementarity_residual: float
    strict_complementarity: bool

    @property
    def max_residual(self) -> float:
        return max(self.stationarity_residual, self.feasibility_residual,
                   self.complementarity_residual)

    def is_solution(self, tol: float = CERT_TOL) -> bool:
        return self.max_residual <= tol

    def to_dict(self) -> dict:
        return {
            "x": self.z_star.x.tolist(),
            "mu": self.z_star.mu.tolist(),
            "stationarity_residual": self.stationarity_residual,
            "feasibility_residual": self.feasibility_residual,
            "complementarity_residual": self.complementarity_residual,
            "strict_complementarity": self.strict_complementarity,
        }


def eval_lagrangian(p: Problem, z: StateLike) -> float:
    z = p.as_state(z)
    g = p.g(z.x)
    return float(p.objective.value(z.x) + z.mu @ g
                 + 0.5 * p.rho * np.sum(np.maximum(0.0, g) ** 2))


def grad_lagrangian(p: Problem, z: StateLike) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(grad_x L, grad_mu L)``."""
    z = p.as_state(z)
    g = p.g(z.x)
    gx = p.objective.grad(z.x) + p.jac_g(z.x) @ (z.mu + p.rho * np.maximum(0.0, g))
    return gx, g


def saddle_field(p: Problem, z: StateLike) -> np.ndarray:
    """Unprojected field ``(-grad_x L / tau_x, grad_mu L / tau_mu)``."""
    gx, gmu = grad_lagrangian(p, z)
    return np.concatenate([-gx / p.tau_x, gmu / p.tau_mu])


def projected_field(p: Problem, z: StateLike, eps_act: float = DEFAULT_EPS_ACT) -> np.ndarray:
    """Saddle field projected onto the tangent cone of ``Z = X x R^m_+`` at ``z``."""
    z = p.as_state(z)
    return tangent_cone_project(p.state_space, z.vector, saddle_field(p, z), eps_act)


def kkt_certificate(p: Problem, z: StateLike, tol: float = CERT_TOL,
                    sc_tol: float = STRICT_COMP_TOL) -> SolutionCertificate:
    """Stationarity, feasibility and complementarity residuals at ``z``.

    Stationarity is the distance of ``-grad f(x) - grad g(x) mu`` to the
    normal cone of ``X`` at ``x`` (constraints within ``tol`` count as
    active).  Strict complementarity holds when every constraint with
    ``|g_i(x)| <= sc_tol`` has ``mu_i > sc_tol``.
    """
    z = p.as_state(z)
    x, mu = z.x, z.mu
    g = p.g(x)
    eta = -p.objective.grad(x) - p.jac_g(x) @ mu
    eps = max(tol, DEFAULT_EPS_ACT)
    stat = normal_cone_distance(p.hard_set, x, eta, eps)
    feas = max(0.0, float(g.max()) if g.size else 0.0) + p.hard_set.residual(x)
    feas += max(0.0, -float(mu.min())) if mu.size else 0.0
    comp = float(np.max(mu * np.abs(g))) if g.size else 0.0
    active = np.abs(g) <= sc_tol
    strict = bool(np.all(mu[active] > sc_tol))
    return SolutionCertificate(z, stat, feas, max(comp, 0.0), strict)


def is_equilibrium(p: Problem, z: StateLike, tol: float = CERT_TOL) -> bool:
    return float(np.linalg.norm(projected_field(p, z))) <= tol
