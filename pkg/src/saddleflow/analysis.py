"""Executable checks of the saddle-flow theory.

* monotonicity of the saddle field and its three-term decomposition,
* dissipation of the squared distance to a solution,
* the item-by-item description of the zero-dissipation set,
* the linear Hamiltonian system the flow reduces to on that set, with its
  closed-form oscillatory solution,
* limit-cycle detection on recorded trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConsistencyError, PreconditionError, UnsupportedError
from .flow import Trajectory, metric_weights
from .problem import (
    STRICT_COMP_TOL,
    Problem,
    SolutionCertificate,
    State,
    StateLike,
    projected_field,
    saddle_field,
)
from .sets import box_bounds

MEMBERSHIP_TOL = 1e-8
ZERO_SINGULAR_TOL = 1e-10
ACTIVE_TOL = 1e-8


def _require_unit_time_constants(p: Problem):
    if p.tau_x != 1.0 or p.tau_mu != 1.0:
        raise PreconditionError("this analysis is defined for unit time constants")


# ---------------------------------------------------------------------------
# monotonicity


@dataclass(frozen=True)
class MonotonicityReport:
    gap: float
    m1: float
    m2: float
    m3: float
    projected_gap: float

    @property
    def decomposition_error(self) -> float:
        return abs(self.gap + self.m1 + self.m2 + self.m3)


def monotonicity_gap(p: Problem, z: StateLike, zh: StateLike) -> MonotonicityReport:
    """``<z - zh, F(z) - F(zh)>`` and its split ``-(m1 + m2 + m3)``.

    ``m1`` comes from the objective, ``m2`` from the augmentation term and
    ``m3`` from the constraint coupling; each is nonnegative for convex data.
    """
    _require_unit_time_constants(p)
    z, zh = p.as_state(z), p.as_state(zh)
    dz = z.vector - zh.vector
    gap = float(dz @ (saddle_field(p, z) - saddle_field(p, zh)))
    pgap = float(dz @ (projected_field(p, z) - projected_field(p, zh)))

    x, xh, mu, muh = z.x, zh.x, z.mu, zh.mu
    dx = x - xh
    g, gh = p.g(x), p.g(xh)
    J, Jh = p.jac_g(x), p.jac_g(xh)
    m1 = float(dx @ (p.objective.grad(x) - p.objective.grad(xh)))
    m2 = p.rho * float(dx @ (J @ np.maximum(0.0, g)) - dx @ (Jh @ np.maximum(0.0, gh)))
    m3 = float(dx @ (J @ mu - Jh @ muh) - (mu - muh) @ (g - gh))
    return MonotonicityReport(gap, m1, m2, m3, pgap)


# ---------------------------------------------------------------------------
# dissipation


def dissipation(p: Problem, z: StateLike, z_star: StateLike, tol: float = 1e-10) -> float:
    """``<z - z*, W [F(z)]>``, nonpositive whenever ``z*`` is a solution.

    ``W`` holds the time constants, so this is half the time derivative of
    the LaSalle value recorded by :func:`saddleflow.flow.integrate`.

    Raises:
        ConsistencyError: if the value is positive beyond ``tol`` (scaled by
            the magnitudes involved), which means a projection or gradient
            is wrong or ``z*`` is not a solution.
    """
    z, zs = p.as_state(z), p.as_state(z_star)
    e = z.vector - zs.vector
    w = metric_weights(p) * projected_field(p, z)
    d = float(e @ w)
    allowance = tol * max(1.0, float(np.linalg.norm(e) * np.linalg.norm(w)))
    if d > allowance:
        raise ConsistencyError(f"positive dissipation {d:.3e} at {z!r}")
    return d


# ---------------------------------------------------------------------------
# zero-dissipation set


@dataclass(frozen=True)
class ZeroDissipationReport:
    in_feasible_set: bool
    item_i_applicable: bool
    max_constraint_violation: float
    grad_f_match: float
    linearization_defects: np.ndarray
    grad_g_mu_match: float
    inactive_duals_zero: bool
    strict_comp_implication: Optional[bool]

    def passes(self, tol: float = 1e-6) -> bool:
        """Items (ii)-(vi) at ``tol``, plus item (i) when it applies."""
        ok = (self.grad_f_match <= tol and self.grad_g_mu_match <= tol
              and bool(np.all(self.linearization_defects <= tol))
              and self.inactive_duals_zero
              and self.strict_comp_implication is not False)
        if self.item_i_applicable:
            ok = ok and self.in_feasible_set
        return ok

    def to_dict(self) -> dict:
        return {
            "in_feasible_set": self.in_feasible_set,
            "item_i_applicable": self.item_i_applicable,
            "max_constraint_violation": self.max_constraint_violation,
            "grad_f_match": self.grad_f_match,
            "linearization_defects": self.linearization_defects.tolist(),
            "grad_g_mu_match": self.grad_g_mu_match,
            "inactive_duals_zero": self.inactive_duals_zero,
            "strict_comp_implication": self.strict_comp_implication,
        }


def zero_dissipation_checks(p: Problem, z: StateLike, cert: SolutionCertificate,
                            tol: float = MEMBERSHIP_TOL, item_tol: float = 1e-6,
                            sc_tol: float = STRICT_COMP_TOL) -> ZeroDissipationReport:
    """Evaluate the six properties every zero-dissipation state must have.

    Args:
        p: problem.
        z: state with ``|dissipation(p, z, cert.z_star)| <= tol``.
        cert: certificate of the reference solution ``z*``.
        tol: membership tolerance for the zero-dissipation set.
        item_tol: tolerance for the boolean items (feasibility, inactive
            duals, strict-complementarity implication).
        sc_tol: threshold separating active from inactive constraints and
            zero from positive multipliers at ``z*``.

    Returns:
        ZeroDissipationReport. ``strict_comp_implication`` is ``None`` when
        ``z*`` is not strictly complementary (the item does not apply).
    """
    z = p.as_state(z)
    zs = cert.z_star
    d = dissipation(p, z, zs)
    if abs(d) > tol:
        raise PreconditionError(f"state is dissipative (|dissipation| = {abs(d):.3e} > {tol:.1e})")
    x, mu, xs, mus = z.x, z.mu, zs.x, zs.mu
    g, gs = p.g(x), p.g(xs)
    J, Js = p.jac_g(x), p.jac_g(xs)

    violation = max(0.0, float(g.max()) if g.size else 0.0) + p.hard_set.residual(x)
    lin = np.array([abs(g[i] - gs[i] - Js[:, i] @ (x - xs)) if mus[i] > sc_tol else 0.0
                    for i in range(p.m)])
    inactive = gs < -sc_tol
    inactive_ok = bool(np.all(mu[inactive] <= item_tol))
    if cert.strict_complementarity:
        active = np.abs(gs) <= sc_tol
        sc_ok = bool(np.all((mu[active] > 0.0) | (g[active] >= -item_tol)))
    else:
        sc_ok = None
    return ZeroDissipationReport(
        in_feasible_set=violation <= item_tol,
        item_i_applicable=p.rho > 0.0 or p.objective.strictly_convex,
        max_constraint_violation=violation,
        grad_f_match=float(np.linalg.norm(p.objective.grad(x) - p.objective.grad(xs))),
        linearization_defects=lin,
        grad_g_mu_match=float(np.linalg.norm(J @ mu - Js @ mu)),
        inactive_duals_zero=inactive_ok,
        strict_comp_implication=sc_ok,
    )


# ---------------------------------------------------------------------------
# Hamiltonian reduction


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    """Linear skew system ``x' = -A^T mu_I - c``, ``mu_I' = A x - d``.

    ``A`` has one row per active constraint (the gradient at ``x*``), so it
    is ``|I*| x n``; ``A = U diag(sigma) V^T`` with square ``U`` and ``V``.
    """

    A: np.ndarray
    c: np.ndarray
    d: np.ndarray
    active_indices: tuple[int, ...]
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray
    x_star: np.ndarray
    mu_star: np.ndarray

    @classmethod
    def from_data(cls, A, x_star, mu_star):
        """Build from active gradients ``A`` (rows) and a solution with every row active.

        ``c`` and ``d`` follow from stationarity ``c = -A^T mu*`` and
        ``d = A x*``.
        """
        A = np.atleast_2d(np.asarray(A, dtype=float))
        x_star = np.asarray(x_star, dtype=float)
        mu_star = np.asarray(mu_star, dtype=float)
        return cls._assemble(A, -A.T @ mu_star, A @ x_star, tuple(range(A.shape[0])),
                             x_star, mu_star)

    @classmethod
    def _assemble(cls, A, c, d, active, x_star, mu_star):
        k, n = A.shape
        if k:
            U, s, Vt = np.linalg.svd(A, full_matrices=True)
            if k > n or s.min() <= ZERO_SINGULAR_TOL:
                raise UnsupportedError(
                    "active constraint gradients are linearly dependent; "
                    "the dual block would carry frozen modes")
            V = Vt.T
        else:
            U, s, V = np.zeros((0, 0)), np.zeros(0), np.eye(n)
        return cls(A=A, c=np.asarray(c, dtype=float), d=np.asarray(d, dtype=float),
                   active_indices=active, U=U, sigma=s, V=V,
                   x_star=np.asarray(x_star, dtype=float), mu_star=np.asarray(mu_star, dtype=float))

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def k(self) -> int:
        return self.A.shape[0]

    @property
    def center(self) -> State:
        return State(self.x_star.copy(), self.mu_star[list(self.active_indices)].copy())

    def rhs(self, z: State) -> State:
        """Right-hand side evaluated at a full state (zero for inactive duals)."""
        mu_I = z.mu[list(self.active_indices)]
        dmu = np.zeros_like(z.mu)
        dmu[list(self.active_indices)] = self.A @ z.x - self.d
        return State(-self.A.T @ mu_I - self.c, dmu)

    def to_dict(self) -> dict:
        return {
            "active_indices": list(self.active_indices),
            "A": self.A.tolist(),
            "c": self.c.tolist(),
            "d": self.d.tolist(),
            "singular_values": self.sigma.tolist(),
        }


def hamiltonian_reduction(p: Problem, cert: SolutionCertificate,
                          active_tol: float = ACTIVE_TOL) -> HamiltonianSystem:
    """Linear system followed by the flow on the zero-dissipation set of ``cert.z_star``."""
    _require_unit_time_constants(p)
    bb = box_bounds(p.hard_set)
    if bb is None or np.any(np.isfinite(bb[0])) or np.any(np.isfinite(bb[1])):
        raise UnsupportedError("Hamiltonian reduction requires X = R^n")
    if not cert.strict_complementarity:
        raise UnsupportedError(
            "reference solution is not strictly complementary; "
            "some active constraint has a zero multiplier")
    xs, mus = cert.z_star.x, cert.z_star.mu
    gs = p.g(xs)
    active = tuple(int(i) for i in np.flatnonzero(np.abs(gs) <= active_tol))
    Js = p.jac_g(xs)
    A = Js[:, list(active)].T if active else np.zeros((0, p.n))
    c = p.objective.grad(xs)
    return HamiltonianSystem._assemble(A, c, A @ xs, active, xs, mus)


def orbit_parameters(hs: HamiltonianSystem, z0: StateLike, tol: float = 1e-9):
    """Amplitudes ``beta``, phases ``phi`` and constant modes ``gamma`` through ``z0``."""
    z0 = z0 if isinstance(z0, State) else State(*z0)
    if z0.x.shape != (hs.n,) or z0.mu.shape != hs.mu_star.shape:
        raise PreconditionError("initial state does not match the system dimensions")
    inactive = np.setdiff1d(np.arange(hs.mu_star.shape[0]), hs.active_indices)
    if inactive.size and np.max(np.abs(z0.mu[inactive])) > tol:
        raise PreconditionError("inactive multipliers must vanish on the zero-dissipation set")
    y0 = hs.V.T @ (z0.x - hs.x_star)
    w0 = hs.U.T @ (z0.mu[list(hs.active_indices)] - hs.mu_star[list(hs.active_indices)])
    k = hs.k
    beta = np.hypot(y0[:k], w0)
    phi = np.arctan2(y0[:k], -w0)
    gamma = y0[k:]
    return beta, phi, gamma


def analytic_orbit(hs: HamiltonianSystem, z0: StateLike, t: float) -> State:
    """Closed-form solution of the Hamiltonian system at time ``t``."""
    z0 = z0 if isinstance(z0, State) else State(*z0)
    beta, phi, gamma = orbit_parameters(hs, z0)
    fit = _orbit_at(hs, beta, phi, gamma, 0.0, z0.mu.shape[0])
    scale = max(1.0, float(np.linalg.norm(z0.vector)))
    if fit.distance(z0) > 1e-9 * scale:
        raise PreconditionError(f"orbit parameters do not reproduce z0 (residual {fit.distance(z0):.2e})")
    return _orbit_at(hs, beta, phi, gamma, t, z0.mu.shape[0])


def _orbit_at(hs, beta, phi, gamma, t, m):
    arg = hs.sigma * t + phi
    x = hs.x_star + hs.V @ np.concatenate([beta * np.sin(arg), gamma])
    mu = np.zeros(m)
    idx = list(hs.active_indices)
    mu[idx] = hs.mu_star[idx] - hs.U @ (beta * np.cos(arg))
    return State(x, mu)


# ---------------------------------------------------------------------------
# limit cycles


@dataclass(frozen=True, eq=False)
class CycleVerdict:
    kind: str
    limit_point: Optional[State] = None
    cycle_radius: Optional[float] = None
    period_estimate: Optional[float] = None
    residual_to_analytic_orbit: Optional[float] = None
    radius_spread: Optional[float] = None
    n_returns: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "limit_point": None if self.limit_point is None else {
                "x": self.limit_point.x.tolist(), "mu": self.limit_point.mu.tolist()},
            "cycle_radius": self.cycle_radius,
            "period_estimate": self.period_estimate,
            "residual_to_analytic_orbit": self.residual_to_analytic_orbit,
            "radius_spread": self.radius_spread,
            "n_returns": self.n_returns,
        }


def detect_cycle(traj: Trajectory, z_star: StateLike, tol_radius: float = 5e-3,
                 tol_return: float = 1e-2, field_tol: float = 1e-6,
                 system: Optional[HamiltonianSystem] = None) -> CycleVerdict:
    """Classify the long-run behaviour of a recorded trajectory.

    The first half of the samples is discarded as transient.  The run has
    converged when the field norm over the final tenth of the samples stays
    at or below ``field_tol``.  It is a limit cycle when the distance to
    ``z_star`` stays constant within ``tol_radius``, the field stays above
    ``10 * field_tol``, and at least three successive crossings of the
    half-line from ``z_star`` through the first retained sample return
    within ``tol_return`` of each other.  The period is the mean time
    between crossings.  With ``system`` given, the largest deviation from
    its closed-form orbit over one period after the first crossing is
    reported as well.
    """
    zs = z_star if isinstance(z_star, State) else State(*z_star)
    K = len(traj)
    if K == 0:
        return CycleVerdict("inconclusive")
    Z = traj.z
    tail_end = max(1, K // 10)
    if np.all(traj.field_norm[K - tail_end:] <= field_tol):
        return CycleVerdict("converged-to-point", limit_point=traj.terminal)

    start = K // 2
    D = Z[start:] - zs.vector
    t = traj.times[start:]
    if D.shape[0] < 4 or D.shape[1] < 2:
        return CycleVerdict("inconclusive")
    r = np.linalg.norm(D, axis=1)
    spread = float(r.max() - r.min())
    if spread > tol_radius or traj.field_norm[start:].min() <= 10.0 * field_tol:
        return CycleVerdict("inconclusive", radius_spread=spread)

    _, _, Vt = np.linalg.svd(D, full_matrices=False)
    P = D @ Vt[:2].T
    u = P[0]
    cross = u[0] * P[:, 1] - u[1] * P[:, 0]
    dot = P @ u
    sign = np.where(cross >= 0.0, 1, -1)
    hits = []
    for k in range(1, len(t) - 1):
        if sign[k] != sign[k + 1] and dot[k] > 0.0 and dot[k + 1] > 0.0:
            s = cross[k] / (cross[k] - cross[k + 1])
            hits.append((sign[k + 1], t[k] + s * (t[k + 1] - t[k]),
                         Z[start + k] + s * (Z[start + k + 1] - Z[start + k])))
    if hits:
        # keep the rotation sense that dominates; back-and-forth motion is not a return
        direction = 1 if sum(h[0] for h in hits) >= 0 else -1
        hits = [h for h in hits if h[0] == direction]
    if len(hits) < 3:
        return CycleVerdict("inconclusive", radius_spread=spread, n_returns=len(hits))
    tc = np.array([h[1] for h in hits])
    zc = np.array([h[2] for h in hits])
    returns = np.linalg.norm(np.diff(zc, axis=0), axis=1)
    if returns.max() > tol_return:
        return CycleVerdict("inconclusive", radius_spread=spread, n_returns=len(hits))
    period = float(np.mean(np.diff(tc)))

    residual = None
    if system is not None:
        n = system.n
        anchor = State(zc[0][:n].copy(), zc[0][n:].copy())
        in_period = (traj.times >= tc[0]) & (traj.times <= tc[0] + period)
        try:
            dev = [analytic_orbit(system, anchor, tk - tc[0]).distance(traj.state(j))
                   for j, tk in zip(np.flatnonzero(in_period), traj.times[in_period])]
            residual = float(max(dev)) if dev else None
        except PreconditionError:
            residual = None
    return CycleVerdict("limit-cycle", cycle_radius=float(r.mean()), period_estimate=period,
                        residual_to_analytic_orbit=residual, radius_spread=spread,
                        n_returns=len(hits))


def hamiltonian_residuals(p: Problem, traj: Trajectory, system: HamiltonianSystem,
                          z_star: StateLike, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """``||z'_observed - rhs(z)||`` at samples inside the zero-dissipation set.

    The observed velocity is the central difference of neighbouring samples;
    a sample is used only when it and both neighbours have
    ``|dissipation| <= tol``.
    """
    zs = p.as_state(z_star)
    if traj.z_ref is not None and traj.z_ref.distance(zs) == 0.0:
        diss = traj.dissipation
    else:
        diss = np.array([dissipation(p, traj.state(k), zs) for k in range(len(traj))])
    inside = np.abs(diss) <= tol
    Z = traj.z
    out = []
    for k in range(1, len(traj) - 1):
        if not (inside[k - 1] and inside[k] and inside[k + 1]):
            continue
        vel = (Z[k + 1] - Z[k - 1]) / (traj.times[k + 1] - traj.times[k - 1])
        out.append(float(np.linalg.norm(vel - system.rhs(traj.state(k)).vector)))
    return np.array(out)


MONOTONICITY_CHECKS = ("gap_nonpositive", "projected_below_gap", "decomposition", "m1_nonnegative",
                       "m2_nonnegative", "m3_nonnegative", "strict_convexity_bound",
                       "infeasible_strict_decrease", "m2_positive_when_infeasible")


def monotonicity_tally(p: Problem, pairs, z_kkt: Optional[StateLike] = None,
                       tol: float = 1e-10) -> dict:
    """Count checks and violations of the monotonicity properties over ``pairs``.

    Every pair tests the sign of the gap and of ``m1, m2, m3``, the
    decomposition identity and ``projected_gap <= gap``.  A strictly convex
    objective adds the ``-lambda_min ||x - xh||^2`` bound.  With ``rho > 0``
    and a feasible KKT point ``z_kkt``, each infeasible ``z`` is also paired
    with ``z_kkt`` to test strict decrease and ``m2 > 0``.

    Returns ``{check: {"checked": k, "violations": v}}``.
    """
    out = {c: {"checked": 0, "violations": 0} for c in MONOTONICITY_CHECKS}

    def tally(name, ok):
        out[name]["checked"] += 1
        out[name]["violations"] += 0 if ok else 1

    lam_min = getattr(p.objective, "min_eigenvalue", 0.0) if p.objective.strictly_convex else None
    zk = p.as_state(z_kkt) if z_kkt is not None else None
    for z, zh in pairs:
        z, zh = p.as_state(z), p.as_state(zh)
        r = monotonicity_gap(p, z, zh)
        tally("gap_nonpositive", r.gap <= tol)
        tally("projected_below_gap", r.projected_gap <= r.gap + tol)
        tally("decomposition", r.decomposition_error <= tol)
        tally("m1_nonnegative", r.m1 >= -tol)
        tally("m2_nonnegative", r.m2 >= -tol)
        tally("m3_nonnegative", r.m3 >= -tol)
        dx = float(np.linalg.norm(z.x - zh.x))
        if lam_min is not None and dx >= 1e-3:
            tally("strict_convexity_bound", r.gap <= -lam_min * dx ** 2 + tol)
        if zk is not None and p.rho > 0.0 and p.m and float(p.g(z.x).max()) >= 1e-3:
            rk = monotonicity_gap(p, z, zk)
            tally("infeasible_strict_decrease", rk.gap < -1e-12)
            tally("m2_positive_when_infeasible", rk.m2 > 0.0)
    return out
