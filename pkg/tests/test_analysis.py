import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from saddleflow import corpus
from saddleflow.analysis import (
    HamiltonianSystem,
    analytic_orbit,
    detect_cycle,
    dissipation,
    hamiltonian_reduction,
    hamiltonian_residuals,
    monotonicity_gap,
    monotonicity_tally,
    orbit_parameters,
    zero_dissipation_checks,
)
from saddleflow.errors import ConsistencyError, PreconditionError, UnsupportedError
from saddleflow.flow import IntegratorConfig, integrate
from saddleflow.oracle import enumerate_kkt
from saddleflow.problem import Affine, Problem, Quadratic, State, kkt_certificate
from saddleflow.sets import WholeSpace

Z_STAR = State([0.0], [1.0])


def rk4(hs: HamiltonianSystem, z0: State, T: float, h: float) -> State:
    """Plain RK4 on the reduced system (independent of the closed form)."""
    idx = list(hs.active_indices)

    def f(y):
        x, mu = y[:hs.n], y[hs.n:]
        return np.concatenate([-hs.A.T @ mu - hs.c, hs.A @ x - hs.d])

    y = np.concatenate([z0.x, z0.mu[idx]])
    for _ in range(int(round(T / h))):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


class TestMonotonicity:
    def test_skew_field(self):
        r = monotonicity_gap(corpus.fig1(), [2.0, 3.0], [0.0, 1.0])
        assert (r.gap, r.m1, r.m2, r.m3) == (0.0, 0.0, 0.0, 0.0)

    def test_augmentation_term(self):
        r = monotonicity_gap(corpus.fig1(1.0), [1.0, 0.0], [0.0, 1.0])
        assert r.gap == pytest.approx(-1.0)
        assert r.m2 == pytest.approx(1.0)

    def test_strictly_convex(self):
        p = Problem(Quadratic([[2.0]], [0.0]), [], WholeSpace(1))
        assert monotonicity_gap(p, [1.0], [0.0]).gap == pytest.approx(-2.0)

    def test_requires_unit_time_constants(self):
        p = Problem(Affine([1.0]), [], WholeSpace(1), tau_x=2.0)
        with pytest.raises(PreconditionError):
            monotonicity_gap(p, [1.0], [0.0])

    @given(st.integers(0, len(corpus.CORPUS) - 1), st.sampled_from([0.0, 0.5, 3.0]),
           st.integers(0, 2 ** 32 - 1))
    def test_properties_hold(self, idx, rho, seed):
        p = corpus.CORPUS[idx](rho)
        r = np.random.default_rng(seed)

        def draw():
            return State(p.hard_set._project(r.uniform(-3, 3, p.n)), r.uniform(0, 3, p.m))

        zk = enumerate_kkt(p).solutions[0].z_star
        tally = monotonicity_tally(p, [(draw(), draw()) for _ in range(5)], zk)
        assert all(v["violations"] == 0 for v in tally.values()), tally


class TestDissipation:
    def test_negative_axis(self):
        assert dissipation(corpus.fig1(), [-1.0, 0.0], Z_STAR) == pytest.approx(-1.0)

    def test_conservative_region(self):
        assert dissipation(corpus.fig1(), [0.5, 1.5], Z_STAR) == pytest.approx(0.0)

    def test_at_solution(self):
        assert dissipation(corpus.fig1(), Z_STAR, Z_STAR) == 0.0

    def test_wrong_reference_detected(self):
        # (1, 0) is not a solution; the field pushes away from it somewhere
        with pytest.raises(ConsistencyError):
            dissipation(corpus.fig1(), [2.0, 0.5], [1.0, 0.0])


class TestZeroDissipation:
    def test_on_circle(self):
        p = corpus.fig1()
        th = 1.0
        rep = zero_dissipation_checks(p, [np.sin(th), 1 - np.cos(th)], kkt_certificate(p, Z_STAR))
        assert rep.grad_f_match == 0.0
        assert np.all(rep.linearization_defects == 0.0)
        assert rep.inactive_duals_zero
        assert rep.strict_comp_implication is True
        assert not rep.item_i_applicable

    def test_inactive_dual_vanishes(self):
        p = corpus.fig1_two_constraints()
        cert = kkt_certificate(p, State([0.0], [1.0, 0.0]))
        traj = integrate(p, [0.5, 1.0, 0.0], IntegratorConfig(h=1e-3, T=20.0), z_ref=cert.z_star)
        inside = np.flatnonzero(np.abs(traj.dissipation) <= 1e-8)
        assert inside.size > 100
        for k in inside[::50]:
            rep = zero_dissipation_checks(p, traj.state(int(k)), cert)
            assert rep.inactive_duals_zero
            assert traj.mu[k, 1] == 0.0

    def test_at_solution(self):
        p = corpus.qp_box()
        cert = enumerate_kkt(p).solutions[0]
        rep = zero_dissipation_checks(p, cert.z_star, cert)
        assert rep.passes()
        assert rep.grad_f_match == 0.0 and rep.grad_g_mu_match == 0.0

    def test_not_applicable_without_strictness(self):
        p = Problem(Quadratic([[2.0]], [0.0]), [Affine([1.0])], WholeSpace(1))
        cert = kkt_certificate(p, [0.0, 0.0])
        assert zero_dissipation_checks(p, [0.0, 0.0], cert).strict_comp_implication is None

    def test_dissipative_point_rejected(self):
        p = corpus.fig1()
        with pytest.raises(PreconditionError):
            zero_dissipation_checks(p, [-1.0, 0.0], kkt_certificate(p, Z_STAR))

    def test_feasibility_bound_with_augmentation(self):
        # for rho > 0 the infeasibility of a sample is bounded by sqrt(|dissipation| / rho)
        p = corpus.fig1(1.0)
        traj = integrate(p, [2.0, 2.5], IntegratorConfig(T=100.0), z_ref=Z_STAR)
        g = traj.x[:, 0]
        assert np.all(np.maximum(g, 0.0) <= np.sqrt(np.abs(traj.dissipation) / p.rho) + 1e-12)


class TestHamiltonian:
    def test_fig1_reduction(self):
        p = corpus.fig1()
        hs = hamiltonian_reduction(p, kkt_certificate(p, Z_STAR))
        assert hs.active_indices == (0,)
        assert hs.A.tolist() == [[1.0]] and hs.c.tolist() == [-1.0] and hs.d.tolist() == [0.0]
        rhs = hs.rhs(State([0.3], [0.2]))
        assert rhs.vector == pytest.approx([0.8, 0.3])

    def test_sign_bookkeeping(self):
        p = Problem(Affine([1.0]), [Affine([-1.0])], WholeSpace(1))
        hs = hamiltonian_reduction(p, kkt_certificate(p, [0.0, 1.0]))
        assert hs.A.tolist() == [[-1.0]] and hs.c.tolist() == [1.0] and hs.d.tolist() == [0.0]

    def test_no_active_constraints(self):
        p = Problem(Quadratic(np.eye(2), [0.0, 0.0]), [Affine([1.0, 0.0], 1.0)], WholeSpace(2))
        hs = hamiltonian_reduction(p, kkt_certificate(p, [0.0, 0.0, 0.0]))
        assert hs.k == 0
        z0 = State([0.4, -0.2], [0.0])
        assert analytic_orbit(hs, z0, 3.0).distance(z0) == 0.0

    def test_svd(self):
        p = corpus.lp2d()
        cert = enumerate_kkt(p).solutions[0]
        hs = hamiltonian_reduction(p, cert)
        S = np.zeros(hs.A.shape)
        np.fill_diagonal(S, hs.sigma)
        np.testing.assert_allclose(hs.U @ S @ hs.V.T, hs.A, atol=1e-10)

    def test_requires_whole_space(self):
        p = corpus.lp_box()
        with pytest.raises(UnsupportedError):
            hamiltonian_reduction(p, enumerate_kkt(p).solutions[0])

    def test_requires_strict_complementarity(self):
        p = Problem(Quadratic([[2.0]], [0.0]), [Affine([1.0])], WholeSpace(1))
        with pytest.raises(UnsupportedError):
            hamiltonian_reduction(p, kkt_certificate(p, [0.0, 0.0]))

    def test_dependent_active_rows_refused(self):
        with pytest.raises(UnsupportedError):
            HamiltonianSystem.from_data([[1.0], [2.0]], [0.0], [0.5, 0.25])


class TestOrbit:
    def test_harmonic(self):
        hs = HamiltonianSystem.from_data([[1.0]], [0.0], [1.0])
        beta, phi, gamma = orbit_parameters(hs, State([0.0], [0.0]))
        assert beta == pytest.approx([1.0]) and phi == pytest.approx([0.0]) and gamma.size == 0
        z = analytic_orbit(hs, State([0.0], [0.0]), np.pi / 2)
        assert z.vector == pytest.approx([1.0, 1.0])

    def test_center_is_constant(self):
        hs = HamiltonianSystem.from_data([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]], [1.0, 0.0, 2.0],
                                         [0.5, 1.5])
        c = State(hs.x_star, hs.mu_star)
        assert analytic_orbit(hs, c, 2.7).distance(c) <= 1e-14

    def test_inconsistent_initial_state(self):
        p = corpus.fig1_two_constraints()
        hs = hamiltonian_reduction(p, kkt_certificate(p, State([0.0], [1.0, 0.0])))
        with pytest.raises(PreconditionError):
            analytic_orbit(hs, State([0.0], [1.0, 0.5]), 1.0)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_rk4(self, seed):
        r = np.random.default_rng(seed)
        hs = HamiltonianSystem.from_data(r.normal(size=(2, 3)), r.normal(size=3),
                                         r.uniform(0.5, 2.0, 2))
        z0 = State(r.normal(size=3), r.normal(size=2))
        ref = rk4(hs, z0, 5.0, 1e-4)
        assert np.max(np.abs(analytic_orbit(hs, z0, 5.0).vector - ref)) <= 1e-6


class TestCycle:
    def test_limit_cycle(self):
        p = corpus.fig1()
        hs = hamiltonian_reduction(p, kkt_certificate(p, Z_STAR))
        traj = integrate(p, [2.0, 2.5], IntegratorConfig(T=400.0), z_ref=Z_STAR)
        v = detect_cycle(traj, Z_STAR, system=hs)
        assert v.kind == "limit-cycle"
        assert v.cycle_radius == pytest.approx(1.0, abs=5e-3)
        assert v.period_estimate == pytest.approx(2 * np.pi, rel=0.02)
        assert v.residual_to_analytic_orbit < 1e-2

    def test_converged(self):
        traj = integrate(corpus.fig1(1.0), [2.0, 2.5], IntegratorConfig(T=100.0))
        v = detect_cycle(traj, Z_STAR)
        assert v.kind == "converged-to-point"
        assert v.limit_point.distance(Z_STAR) <= 1e-3

    def test_start_at_equilibrium(self):
        traj = integrate(corpus.fig1(), [0.0, 1.0], IntegratorConfig(T=10.0))
        v = detect_cycle(traj, Z_STAR)
        assert v.kind == "converged-to-point" and v.period_estimate is None

    def test_short_transient_inconclusive(self):
        traj = integrate(corpus.fig1(1.0), [2.0, 2.5], IntegratorConfig(T=2.0))
        assert detect_cycle(traj, Z_STAR).kind == "inconclusive"

    def test_residuals_on_cycle(self):
        p = corpus.fig1()
        hs = hamiltonian_reduction(p, kkt_certificate(p, Z_STAR))
        cfg = IntegratorConfig(T=100.0)
        traj = integrate(p, [2.0, 2.5], cfg, z_ref=Z_STAR)
        res = hamiltonian_residuals(p, traj, hs, Z_STAR)
        assert res.size > 1000
        assert res.max() <= 10 * cfg.h
