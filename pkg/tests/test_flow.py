import numpy as np
import pytest

from saddleflow import corpus
from saddleflow.analysis import HamiltonianSystem, analytic_orbit
from saddleflow.errors import ConfigurationError, PreconditionError
from saddleflow.flow import IntegratorConfig, Trajectory, integrate, lie_derivative_estimate, step
from saddleflow.oracle import enumerate_kkt
from saddleflow.problem import State

Z_STAR = State([0.0], [1.0])


class TestConfig:
    @pytest.mark.parametrize("kw", [{"h": 0.0}, {"h": 1.0, "T": 0.5}, {"scheme": "rk4"},
                                    {"record_stride": 0}, {"equilibrium_tol": -1.0}])
    def test_invalid(self, kw):
        with pytest.raises(ConfigurationError):
            IntegratorConfig(**kw)

    def test_step_count(self):
        assert IntegratorConfig(h=1e-3, T=400.0).n_steps == 400_000
        assert IntegratorConfig(h=0.3, T=1.0).n_steps == 4


class TestStep:
    def test_interior(self):
        z = step(corpus.fig1(), [0.0, 0.0], 0.1)
        assert z.vector == pytest.approx([0.1, 0.0])

    def test_clamp(self):
        z = step(corpus.fig1(), [-1.0, 0.0], 0.1)
        assert z.vector == pytest.approx([-0.9, 0.0])
        assert z.mu[0] == 0.0

    @pytest.mark.parametrize("scheme", ["projected-euler", "tangent-step"])
    def test_fixed_point(self, scheme):
        z = step(corpus.fig1(), [0.0, 1.0], 0.37, scheme)
        assert z.vector == pytest.approx([0.0, 1.0])

    def test_outside_rejected(self):
        with pytest.raises(PreconditionError):
            step(corpus.fig1(), [0.0, -1.0], 0.1)

    def test_polyhedral_hard_set(self):
        p = corpus.qp_polyhedron()
        z = step(p, [0.5, 0.5, 0.0], 1.0)
        assert p.hard_set.residual(z.x) <= 1e-12


class TestIntegrate:
    def test_converges_with_augmentation(self):
        traj = integrate(corpus.fig1(1.0), [2.0, 2.5], IntegratorConfig(T=100.0))
        assert traj.terminal.distance(Z_STAR) <= 1e-3

    def test_circles_without_augmentation(self):
        traj = integrate(corpus.fig1(), [2.0, 2.5], IntegratorConfig(T=200.0))
        assert traj.terminal_status == "reached-horizon"
        assert traj.terminal.distance(Z_STAR) == pytest.approx(1.0, abs=5e-3)

    def test_start_at_equilibrium(self):
        traj = integrate(corpus.fig1(), [0.0, 1.0], IntegratorConfig(T=10.0))
        assert traj.terminal_status == "equilibrium"
        assert len(traj) == 10

    def test_divergence_reported(self):
        # tiny time constant with a huge step blows up
        from saddleflow.problem import Problem, Quadratic
        from saddleflow.sets import WholeSpace
        p = Problem(Quadratic([[1.0]], [0.0]), [], WholeSpace(1), tau_x=1e-3)
        traj = integrate(p, [1.0], IntegratorConfig(h=1.0, T=1000.0, record_stride=1))
        assert traj.terminal_status == "error"
        assert traj.error_step is not None

    def test_viability(self):
        p = corpus.lp_box(1.0)
        traj = integrate(p, [1.0, 0.0, 0.0], IntegratorConfig(T=20.0), z_ref=[0.0, 1.0, 0.0])
        assert np.all(traj.mu >= 0.0)
        assert max(p.hard_set.residual(x) for x in traj.x) <= 1e-9

    @pytest.mark.parametrize("make", [corpus.qp_box, corpus.qp_orthant, corpus.lp_two_sided])
    def test_kernel_matches_python_loop(self, make):
        p = make(1.0)
        z0 = State(p.hard_set._project(np.full(p.n, 0.7)), np.full(p.m, 0.3))
        zs = enumerate_kkt(p).solutions[0].z_star
        cfg = IntegratorConfig(h=1e-2, T=5.0, record_stride=7)
        a = integrate(p, z0, cfg, z_ref=zs)
        b = integrate(p, z0, cfg, z_ref=zs, use_kernel=False)
        np.testing.assert_allclose(a.z, b.z, atol=1e-12)
        np.testing.assert_allclose(a.times, b.times, atol=1e-12)
        np.testing.assert_allclose(a.dissipation, b.dissipation, atol=1e-10)
        np.testing.assert_allclose(a.field_norm, b.field_norm, atol=1e-10)

    def test_polyhedral_python_path_converges(self):
        p = corpus.qp_polyhedron(1.0)
        zs = enumerate_kkt(p).solutions[0].z_star
        traj = integrate(p, [0.0, 0.0, 0.0], IntegratorConfig(h=1e-2, T=60.0, record_stride=20))
        assert traj.terminal.distance(zs) <= 1e-4

    def test_lasalle_nonincreasing(self):
        for make in (corpus.qp_box, corpus.lp2d, corpus.qp_orthant):
            p = make(1.0)
            zs = enumerate_kkt(p).solutions[0].z_star
            z0 = State(p.hard_set._project(np.full(p.n, 2.0)), np.full(p.m, 1.5))
            cfg = IntegratorConfig(h=1e-3, T=20.0, record_stride=1)
            traj = integrate(p, z0, cfg, z_ref=zs)
            assert np.all(np.diff(traj.lasalle) <= 10 * cfg.h)
            assert np.any(np.diff(traj.lasalle) < 0.0)

    def test_schemes_agree(self):
        p = corpus.fig1(1.0)
        cfg = dict(h=1e-3, T=30.0)
        a = integrate(p, [2.0, 2.5], IntegratorConfig(**cfg)).terminal
        b = integrate(p, [2.0, 2.5], IntegratorConfig(scheme="tangent-step", **cfg)).terminal
        assert a.distance(b) <= 10 * cfg["h"]

    def test_first_order_convergence(self):
        # deviation from the closed-form circle over one period halves with h
        hs = HamiltonianSystem.from_data([[1.0]], [0.0], [1.0])
        z0 = State([1.0], [1.0])
        errs = []
        for h in (2e-3, 1e-3, 5e-4):
            traj = integrate(corpus.fig1(), z0, IntegratorConfig(h=h, T=2 * np.pi, record_stride=1))
            errs.append(max(analytic_orbit(hs, z0, t).distance(traj.state(k))
                            for k, t in enumerate(traj.times)))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        np.testing.assert_allclose(ratios, 2.0, rtol=0.1)


class TestLieDerivative:
    def _traj(self, z0):
        return integrate(corpus.fig1(), z0, IntegratorConfig(h=1e-4, T=1e-3, record_stride=1),
                         z_ref=Z_STAR)

    def test_dissipative_axis(self):
        assert lie_derivative_estimate(self._traj([-1.0, 0.0]), 0) == pytest.approx(-2.0, abs=1e-3)

    def test_conservative_region(self):
        assert lie_derivative_estimate(self._traj([0.5, 1.5]), 0) == pytest.approx(0.0, abs=1e-3)

    def test_equilibrium_segment(self):
        assert lie_derivative_estimate(self._traj([0.0, 1.0]), 0) == 0.0

    def test_out_of_range(self):
        traj = self._traj([0.5, 1.5])
        with pytest.raises(IndexError):
            lie_derivative_estimate(traj, len(traj) - 1)


class TestCsv:
    def test_round_trip(self):
        traj = integrate(corpus.lp2d(1.0), np.zeros(6), IntegratorConfig(h=1e-2, T=1.0),
                         z_ref=enumerate_kkt(corpus.lp2d()).solutions[0].z_star)
        text = traj.to_csv()
        assert text.splitlines()[0] == "t,x_1,x_2,mu_1,mu_2,mu_3,mu_4,dissipation,lasalle,field_norm"
        back = Trajectory.from_csv(text)
        assert np.array_equal(back.z, traj.z)
        assert np.array_equal(back.lasalle, traj.lasalle)
