"""Brute-force ground truth: KKT enumeration and finite-difference gradients."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, UnsupportedError
from .problem import (
    Affine,
    Problem,
    SolutionCertificate,
    State,
    grad_lagrangian,
    kkt_certificate,
)
from .sets import Box, Polyhedron

log = logging.getLogger(__name__)

MAX_CONSTRAINTS = 16
DEDUP_DISTANCE = 1e-7
CERT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SolutionSet:
    solutions: list[SolutionCertificate]
    enumeration_complete: bool
    active_set_per_solution: list[tuple[int, ...]]

    @property
    def unique(self) -> bool:
        return self.enumeration_complete and len(self.solutions) == 1

    def primal_points(self) -> np.ndarray:
        if not self.solutions:
            return np.zeros((0, 0))
        return np.array([c.z_star.x for c in self.solutions])

    def primal_distance(self, x) -> float:
        """Distance from ``x`` to the nearest enumerated primal point."""
        pts = self.primal_points()
        if pts.size == 0:
            return float("inf")
        return float(np.min(np.linalg.norm(pts - np.asarray(x, dtype=float), axis=1)))

    def to_dict(self) -> dict:
        return {
            "enumeration_complete": self.enumeration_complete,
            "solutions": [dict(c.to_dict(), active_set=list(s))
                          for c, s in zip(self.solutions, self.active_set_per_solution)],
        }


def _linear_rows(p: Problem):
    """All inequalities as ``C x <= d``: dualized constraints first, then finite faces of X."""
    for i, g in enumerate(p.constraints):
        if not isinstance(g, Affine):
            raise UnsupportedError(f"constraint {i} is not affine; enumeration needs linear rows")
    G = np.array([g.a for g in p.constraints]).reshape(p.m, p.n)
    h = np.array([g.b for g in p.constraints])
    X = p.hard_set
    if isinstance(X, Box):
        C, d = X.rows()
        keep = np.isfinite(d)
        C, d = C[keep], d[keep]
    elif isinstance(X, Polyhedron):
        C, d = X.rows()
    else:
        raise UnsupportedError(f"enumeration supports box or halfspace sets, not {X.kind}")
    return np.vstack([G, C]), np.concatenate([h, d])


def enumerate_kkt(p: Problem, tol: float = CERT_TOL) -> SolutionSet:
    """All KKT pairs found by treating every subset of inequalities as active.

    For each subset ``S`` the equality-constrained stationarity system

        [Q    C_S^T] [x  ]   [-q ]
        [C_S  0    ] [lam] = [d_S]

    is solved; the point is kept if it is primal feasible with ``lam >= 0``.
    Singular systems are solved in the least-squares sense; a consistent
    singular system means a whole family of solutions, of which only the
    minimum-norm member is reported and ``enumeration_complete`` is cleared.
    """
    C, d = _linear_rows(p)
    k = C.shape[0]
    if k > MAX_CONSTRAINTS:
        raise UnsupportedError(f"{k} inequalities exceed the enumeration budget of {MAX_CONSTRAINTS}")
    Q, q, _ = p.objective.as_quadratic()
    n, m = p.n, p.m
    found: list[tuple[State, tuple[int, ...]]] = []
    complete = True
    for size in range(k + 1):
        for S in itertools.combinations(range(k), size):
            CS = C[list(S)]
            K = np.block([[Q, CS.T], [CS, np.zeros((size, size))]])
            rhs = np.concatenate([-q, d[list(S)]])
            singular = np.linalg.matrix_rank(K) < K.shape[0]
            if singular:
                sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
                if np.linalg.norm(K @ sol - rhs) > 1e-9 * max(1.0, np.linalg.norm(rhs)):
                    log.debug("active set %s: inconsistent singular system, skipped", S)
                    continue
            else:
                sol = np.linalg.solve(K, rhs)
            x, lam = sol[:n] + 0.0, sol[n:]
            if np.any(lam < -tol) or np.any(C @ x - d > tol):
                continue
            if singular:
                log.debug("active set %s: singular system admits a family of solutions", S)
                complete = False
            mu = np.zeros(m)
            for j, i in enumerate(S):
                if i < m:
                    mu[i] = max(lam[j], 0.0)
            z = State(x, mu)
            if any(z.distance(other) <= DEDUP_DISTANCE for other, _ in found):
                continue
            found.append((z, tuple(i for i in S if i < m)))
    found.sort(key=lambda item: tuple(item[0].vector))
    certs = []
    sets = []
    for z, S in found:
        cert = kkt_certificate(p, z, tol=max(tol, 1e-8))
        if cert.max_residual > 10 * tol * max(1.0, float(np.linalg.norm(z.vector))):
            log.debug("candidate %r failed certification (%.2e)", z, cert.max_residual)
            continue
        certs.append(cert)
        sets.append(S)
    if len(certs) > 1:
        log.info("problem %s has %d KKT solutions", p.name or "<unnamed>", len(certs))
    if not certs:
        log.warning("no KKT solution found; problem may violate Slater's condition")
    return SolutionSet(certs, complete, sets)


def finite_diff_gradients(p: Problem, x, step: float = 1e-6, mu=None) -> float:
    """Largest central-difference error of the analytic gradients of f, each g_i and L.

    ``mu`` (default zeros) is the multiplier used for the Lagrangian gradient.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (p.n,):
        raise PreconditionError(f"expected x of length {p.n}")
    mu = np.zeros(p.m) if mu is None else np.asarray(mu, dtype=float).reshape(-1)
    g = p.g(x)
    if g.size and np.min(np.abs(g)) <= 10 * step:
        raise PreconditionError("a constraint is within 10*step of zero; the max-term is not smooth there")

    def fd(fun):
        out = np.empty(p.n)
        for j in range(p.n):
            e = np.zeros(p.n)
            e[j] = step
            out[j] = (fun(x + e) - fun(x - e)) / (2 * step)
        return out

    def lagr(y):
        gy = p.g(y)
        return p.objective.value(y) + mu @ gy + 0.5 * p.rho * np.sum(np.maximum(0.0, gy) ** 2)

    err = float(np.max(np.abs(fd(p.objective.value) - p.objective.grad(x))))
    for gi in p.constraints:
        err = max(err, float(np.max(np.abs(fd(gi.value) - gi.grad(x)))))
    gx, _ = grad_lagrangian(p, State(x, mu))
    return max(err, float(np.max(np.abs(fd(lagr) - gx))))
