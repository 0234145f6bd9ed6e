import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from affine_lab import cone
from affine_lab import riccati
from affine_lab import simulate as sim
from affine_lab import stationary as stat
import affine_lab.params as mp


def cone_point(rng, n, scale=1.0):
    a = rng.normal(size=(n, n))
    x = a @ a.T
    return scale * x / cone.hs_norm(x)


def scalar_ou(b=1.0, g=-0.5, m_atoms=()):
    # lyapunov factor g gives drift operator 2g on Sym(1)
    return mp.make_params(1, np.array([[b]]),
                          cone.lyapunov_superop(np.array([[g]])),
                          m_atoms=m_atoms)


def effective_state_matrix(p):
    """Mean ODE dz = b_hat + A z built by hand: the simulated drift is
    b - I_m plus jumps at their arrival rates, which telescopes to the
    effective drift pair with the linear part acting on the state side."""
    b_hat = p.b.copy()
    A = p.B.matrix.copy()
    for w, xi in zip(p.m.weights, p.m.sites):
        if cone.hs_norm(xi) > 1.0:
            b_hat = b_hat + w * xi
    for M, xi in zip(p.mu.masses, p.mu.sites):
        if cone.hs_norm(xi) > 1.0:
            A = A + np.outer(cone.vec(xi), cone.vec(M)) / np.sum(xi * xi)
    return cone.vec(b_hat), A


class TestLaplaceInvariant:
    def test_u_zero(self, ou_params):
        assert stat.laplace_invariant(ou_params, np.zeros((2, 2))) == 1.0

    def test_null_drift_gives_unit_transform(self, rng):
        p = mp.make_params(2, np.zeros((2, 2)),
                           cone.lyapunov_superop(-0.5 * np.eye(2)))
        for scale in (0.3, 1.0):
            u = cone_point(rng, 2, scale)
            assert stat.laplace_invariant(p, u) == pytest.approx(1.0, abs=1e-10)

    def test_scalar_ou_closed_form(self):
        # psi(s, u) = u e^{-s}, so -log L(u) = int u e^{-s} ds = u
        p = scalar_ou(b=1.0, g=-0.5)
        got = stat.laplace_invariant(p, np.array([[1.0]]), tol=1e-10)
        assert got == pytest.approx(np.exp(-1.0), rel=1e-9)

    def test_antitone_on_cone(self, statedep_params, rng):
        for _ in range(5):
            u = cone_point(rng, 2)
            u_bigger = u + cone_point(rng, 2, 0.7)
            assert (stat.laplace_invariant(statedep_params, u_bigger)
                    <= stat.laplace_invariant(statedep_params, u) + 1e-12)


class TestMeanInvariant:
    def test_scalar_geometric(self):
        assert stat.mean_invariant(scalar_ou(b=1.0, g=-0.5)) == pytest.approx(1.0)

    def test_null_drift(self):
        p = mp.make_params(2, np.zeros((2, 2)),
                           cone.lyapunov_superop(-0.5 * np.eye(2)))
        assert np.allclose(stat.mean_invariant(p), 0.0, atol=1e-14)

    def test_matches_time_integral(self):
        p = mp.make_params(2, np.eye(2), cone.lyapunov_superop(-0.5 * np.eye(2)),
                           m_atoms=[(0.5, np.diag([0.4, 0.2]))])
        b_vec, A = effective_state_matrix(p)
        quad, _ = scipy.integrate.quad_vec(
            lambda s: scipy.linalg.expm(s * A) @ b_vec, 0.0, 80.0,
            epsabs=1e-13, epsrel=1e-11)
        got = cone.vec(stat.mean_invariant(p))
        assert np.linalg.norm(got - quad) <= 1e-8 * np.linalg.norm(quad)

    def test_matches_long_run_sample(self, ou_params):
        sample = sim.stationary_sampler(ou_params, count=4096, seed=314)
        emp = sample.states.mean(axis=0)
        se = sample.states.std(axis=0, ddof=1) / np.sqrt(sample.states.shape[0])
        gap = np.abs(emp - stat.mean_invariant(ou_params))
        assert np.all(gap <= 3.0 * se + sample.bias_bound)

    def test_gradient_identity(self, ou_params):
        # mean = -grad log L at 0; one sided second difference at h
        h = 1e-5
        mean = stat.mean_invariant(ou_params)
        for v in (np.eye(2), np.diag([1.0, 0.0]), np.array([[0.5, 0.3], [0.3, 0.4]])):
            f = -np.log(stat.laplace_invariant(ou_params, 2 * h * v, tol=1e-12))
            want = cone.trace_inner(mean, v)
            assert abs(f / (2 * h) - want) <= 1e-4 * max(1.0, abs(want))


class TestSecondMomentInvariant:
    def test_scalar_pure_drift_is_squared_mean(self):
        # no jumps: pi is the point mass at the mean, so m2 = mean^2
        p = scalar_ou(b=1.0, g=-0.5)
        op = stat.second_moment_invariant(p)
        assert op.matrix.shape == (1, 1)
        assert op.matrix[0, 0] == pytest.approx(1.0, rel=1e-12)

    def test_null_instance_vanishes(self):
        p = mp.make_params(2, np.zeros((2, 2)),
                           cone.lyapunov_superop(-0.5 * np.eye(2)))
        assert np.allclose(stat.second_moment_invariant(p).matrix, 0.0,
                           atol=1e-12)

    def test_matches_long_run_sample(self, ou_params):
        sample = sim.stationary_sampler(ou_params, count=4096, seed=2718)
        V = cone.vec(sample.states)
        prods = V[:, :, None] * V[:, None, :]
        emp = prods.mean(axis=0)
        se = prods.std(axis=0, ddof=1) / np.sqrt(V.shape[0])
        S = stat.second_moment_invariant(ou_params).matrix
        assert np.all(np.abs(emp - S) <= 3.0 * se + 2.0 * sample.bias_bound)

    def test_psd_and_cauchy_schwarz(self, statedep_params, rng):
        law = stat.invariant_law(statedep_params)
        S = law.second_moment.matrix
        assert np.min(scipy.linalg.eigvalsh(0.5 * (S + S.T))) >= -1e-10
        assert cone.is_in_cone(law.mean, tol=1e-10)
        for _ in range(5):
            v = rng.normal(size=(2, 2))
            v = (v + v.T) / 2.0
            lhs = cone.trace_inner(law.mean, v) ** 2
            rhs = cone.vec(v) @ S @ cone.vec(v)
            assert lhs <= rhs + 1e-10


class TestWassersteinBound:
    def test_mu_empty_single_term(self, ou_params):
        assert ou_params.mu.n_atoms == 0
        law = stat.invariant_law(ou_params)
        x = np.diag([0.5, 0.2])
        m2 = float(np.trace(law.second_moment.matrix))
        for pexp in (1.0, 1.5, 2.0):
            for t in (0.0, 1.0, 3.0):
                want = 2.0 * law.M * np.exp(-law.delta * t) * (
                    cone.hs_norm(x) + np.sqrt(m2))
                assert stat.wasserstein_bound(law, x, pexp, t) == pytest.approx(
                    want, rel=1e-12)

    def test_nonincreasing_in_t(self, statedep_params):
        law = stat.invariant_law(statedep_params)
        x = np.diag([0.7, 0.1])
        vals = [stat.wasserstein_bound(law, x, 2.0, t)
                for t in np.linspace(0.0, 5.0, 21)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_nonnegative_at_mean(self, ou_params):
        law = stat.invariant_law(ou_params)
        assert stat.wasserstein_bound(law, law.mean, 2.0, 0.0) >= 0.0


class TestInvarianceResidual:
    def test_u_zero(self, statedep_params):
        assert stat.invariance_residual(statedep_params, np.zeros((2, 2)), 1.0) == 0.0

    def test_t_zero(self, statedep_params, rng):
        assert stat.invariance_residual(statedep_params, cone_point(rng, 2), 0.0) == 0.0

    def test_fixed_point_defect_small(self, statedep_params, ou_params, rng):
        for p in (ou_params, statedep_params):
            for _ in range(3):
                u = cone_point(rng, 2, float(rng.uniform(0.3, 1.2)))
                assert stat.invariance_residual(p, u, 1.0, tol=1e-8) <= 1e-7


class TestTransitionMoments:
    def test_mean_matches_direct_quadrature(self, statedep_params, rng):
        p = statedep_params
        x = cone_point(rng, 2)
        t = 1.3
        b_vec, A = effective_state_matrix(p)
        quad, _ = scipy.integrate.quad_vec(
            lambda s: scipy.linalg.expm(s * A) @ b_vec, 0.0, t,
            epsabs=1e-13, epsrel=1e-11)
        want = scipy.linalg.expm(t * A) @ cone.vec(x) + quad
        got = cone.vec(stat.transition_mean(p, x, t))
        assert np.linalg.norm(got - want) <= 1e-9 * max(1.0, np.linalg.norm(want))

    def test_long_time_limits(self, ou_params):
        law = stat.invariant_law(ou_params)
        T = 60.0 / law.delta
        m = stat.transition_mean(ou_params, np.diag([2.0, 1.0]), T)
        assert np.allclose(m, law.mean, atol=1e-8)
        S = stat.transition_second_moment(ou_params, np.diag([2.0, 1.0]), T)
        assert np.allclose(S, law.second_moment.matrix, atol=1e-6)
