import numpy as np
import pytest
import scipy.linalg

import affine_lab.cone as cone
import affine_lab.covariance as jm
import affine_lab.params as mp
import affine_lab.riccati as riccati
import affine_lab.stationary as stat
from affine_lab.errors import AffineLabError


def flat_x_params(n=2):
    """Covariance part with zero drift and no jumps: X_t = x0 for all t."""
    N = cone.sym_dim(n)
    return mp.make_params(n, b=np.zeros((n, n)), B=np.zeros((N, N)))


def gaussian_spec():
    """dim_h = n = 2, A = 0, D = I: conditional on X the outer part is a
    driftless Gaussian, so the joint transform has a pencil-and-paper form."""
    return jm.JointModelSpec(dim_h=2, A=np.zeros((2, 2)), g0=np.zeros(2),
                             Gamma=np.zeros((2, 3)), D=np.eye(2),
                             x_params=flat_x_params())


def coupled_spec(ou_params):
    A = np.array([[-0.5, 0.2], [0.0, -0.3]])
    g0 = np.array([0.05, -0.02])
    Gamma = 0.1 * np.arange(6, dtype=float).reshape(2, 3)
    D = np.array([[1.0, 0.3], [0.3, 0.5]])
    return jm.JointModelSpec(dim_h=2, A=A, g0=g0, Gamma=Gamma, D=D,
                             x_params=ou_params)


def bns_spec(ou_params):
    A = np.array([[-0.4, 0.1], [0.0, -0.6]])
    D = np.array([[0.8, 0.2], [0.2, 0.6]])
    return jm.JointModelSpec(dim_h=2, A=A, g0=np.zeros(2),
                             Gamma=np.zeros((2, 3)), D=D, x_params=ou_params)


class TestEmbedding:
    def test_pad_state_leading_block(self):
        x = np.array([[2.0, 1.0], [1.0, 3.0]])
        out = jm.pad_state(x, 4)
        assert out.shape == (4, 4)
        assert np.array_equal(out[:2, :2], x)
        assert not np.any(out[2:])
        assert np.array_equal(jm.pad_state(x, 2), x)

    def test_crop_test_symmetrizes(self):
        W = np.arange(16.0).reshape(4, 4)
        got = jm.crop_test(W, 2)
        exp = (W[:2, :2] + W[:2, :2].T) / 2
        assert np.allclose(got, exp, atol=1e-14)


class TestJointRiccati:
    def test_zero_u1_reduces_to_scalar_riccati(self, ou_params, rng):
        a = rng.normal(size=(2, 2))
        u2 = a @ a.T
        T = 1.5
        sol = jm.joint_riccati(coupled_spec(ou_params), np.zeros(2), u2, T,
                               tol=1e-10)
        ref = riccati.solve_riccati(ou_params, u2, T, tol=1e-10,
                                    t_eval=sol.times)
        assert np.max(np.abs(sol.psi2 - ref.psi)) <= 1e-9
        assert np.max(np.abs(sol.Phi - ref.phi)) <= 1e-9
        assert not np.any(sol.psi1)

    def test_all_zero_is_zero(self, ou_params):
        sol = jm.joint_riccati(coupled_spec(ou_params), np.zeros(2),
                               np.zeros((2, 2)), 1.0)
        assert not np.any(sol.Phi)
        assert not np.any(sol.psi1)
        assert not np.any(sol.psi2)

    def test_flat_gaussian_oracle(self):
        # A = 0 keeps psi1 = i e1; the squared test element is -e1 e1^T so
        # psi2 grows linearly at rate 1/2 and Phi stays zero
        spec = gaussian_spec()
        u1 = 1j * np.array([1.0, 0.0])
        sol = jm.joint_riccati(spec, u1, np.zeros((2, 2)), 2.0, tol=1e-11)
        e11 = np.outer([1.0, 0.0], [1.0, 0.0])
        for k, t in enumerate(sol.times):
            assert np.max(np.abs(sol.psi1[k] - u1)) <= 1e-12
            assert np.max(np.abs(sol.psi2[k] - 0.5 * t * e11)) <= 1e-9
        assert np.max(np.abs(sol.Phi)) <= 1e-9

    def test_semigroup_action_on_psi1(self, ou_params):
        spec = coupled_spec(ou_params)
        u1 = 1j * np.array([0.7, -0.2])
        sol = jm.joint_riccati(spec, u1, np.zeros((2, 2)), 1.0)
        for k, t in enumerate(sol.times):
            exp = scipy.linalg.expm(t * spec.A.T) @ u1
            assert np.max(np.abs(sol.psi1[k] - exp)) <= 1e-10


class TestJointTransform:
    def test_all_zero_test_elements(self, ou_params):
        spec = coupled_spec(ou_params)
        val = jm.joint_transform(spec, np.eye(2), np.zeros(2),
                                 np.zeros((2, 2)), 1.0,
                                 y0=np.array([0.3, 0.1]))
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_gaussian_characteristic_function(self):
        # constant X = x0 makes Y_t - y0 centered Gaussian with
        # covariance t * x0, computable by hand
        spec = gaussian_spec()
        x0 = np.diag([2.0, 3.0])
        y0 = np.array([0.5, -1.0])
        v = np.array([0.8, -0.4])
        t = 1.5
        got = jm.joint_transform(spec, x0, 1j * v, np.zeros((2, 2)), t,
                                 y0=y0, tol=1e-11)
        exact = np.exp(1j * (y0 @ v) - 0.5 * t * (v @ x0 @ v))
        assert abs(got - exact) <= 1e-9

    def test_zero_u1_matches_laplace_transition(self, ou_params, rng):
        spec = coupled_spec(ou_params)
        a = rng.normal(size=(2, 2))
        u2 = a @ a.T
        x0 = np.eye(2)
        got = jm.joint_transform(spec, x0, np.zeros(2), u2, 0.8, tol=1e-10)
        ref = riccati.laplace_transition(ou_params, x0, u2, 0.8, tol=1e-10)
        assert abs(got - ref) <= 1e-7

    def test_stationary_zero_u1_is_time_independent(self, ou_params, rng):
        spec = coupled_spec(ou_params)
        a = rng.normal(size=(2, 2))
        u2 = 0.5 * a @ a.T
        ref = stat.laplace_invariant(ou_params, u2, tol=1e-10)
        for t in (0.7, 1.9):
            got = jm.joint_transform(spec, jm.STATIONARY, np.zeros(2), u2, t,
                                     tol=1e-10)
            assert abs(got - ref) <= 1e-7

    def test_conjugate_symmetry(self, ou_params):
        spec = coupled_spec(ou_params)
        v = np.array([0.4, -0.3])
        u2 = 0.2 * np.eye(2)
        y0 = np.array([0.2, -0.4])
        plus = jm.joint_transform(spec, np.eye(2), 1j * v, u2, 0.9, y0=y0)
        minus = jm.joint_transform(spec, np.eye(2), -1j * v, u2, 0.9, y0=y0)
        assert abs(minus - np.conj(plus)) <= 1e-9

    def test_rejects_unknown_regime(self, ou_params):
        spec = coupled_spec(ou_params)
        with pytest.raises(ValueError):
            jm.joint_transform(spec, "steady", np.zeros(2), np.eye(2), 1.0)


class TestBnsTransform:
    def test_matches_generic_point_regime(self, ou_params):
        spec = bns_spec(ou_params)
        u1 = 1j * np.array([0.5, -0.2])
        u2 = 0.3 * np.eye(2)
        x0 = np.eye(2)
        y0 = np.array([0.1, 0.2])
        got = jm.bns_transform(spec, u1, u2, 0.8, x0=x0, y0=y0, tol=1e-10)
        ref = jm.joint_transform(spec, x0, u1, u2, 0.8, y0=y0, tol=1e-10)
        assert abs(got - ref) <= 1e-7

    def test_matches_generic_stationary_regime(self, ou_params):
        spec = bns_spec(ou_params)
        u1 = 1j * np.array([-0.3, 0.4])
        u2 = 0.1 * np.eye(2)
        got = jm.bns_transform(spec, u1, u2, 1.2, stationary=True, tol=1e-10)
        ref = jm.joint_transform(spec, jm.STATIONARY, u1, u2, 1.2, tol=1e-10)
        assert abs(got - ref) <= 1e-7

    def test_zero_u1_matches_laplace_transition(self, ou_params):
        spec = bns_spec(ou_params)
        u2 = 0.4 * np.eye(2)
        x0 = 0.5 * np.eye(2)
        got = jm.bns_transform(spec, np.zeros(2), u2, 0.7, x0=x0, tol=1e-10)
        ref = riccati.laplace_transition(ou_params, x0, u2, 0.7, tol=1e-10)
        assert abs(got - ref) <= 1e-7

    def test_rejects_coupled_models(self, statedep_params):
        spec = jm.JointModelSpec(dim_h=2, A=np.zeros((2, 2)), g0=np.zeros(2),
                                 Gamma=np.zeros((2, 3)), D=np.eye(2),
                                 x_params=statedep_params)
        with pytest.raises(AffineLabError):
            jm.bns_transform(spec, np.zeros(2), np.eye(2), 1.0)


class TestSimulateJoint:
    def test_degenerate_outer_flow(self):
        # zero covariance start and no sources leave Y on the deterministic
        # flow of A, which the mild step reproduces exactly
        A = np.array([[-0.5, 0.2], [0.0, -0.3]])
        spec = jm.JointModelSpec(dim_h=2, A=A, g0=np.zeros(2),
                                 Gamma=np.zeros((2, 3)), D=np.eye(2),
                                 x_params=flat_x_params())
        y0 = np.array([1.0, -0.5])
        grid = np.linspace(0.0, 1.0, 9)
        Y, xs = jm.simulate_joint(spec, y0, np.zeros((2, 2)), grid, seed=3,
                                  n_paths=4)
        for k, t in enumerate(grid):
            exp = scipy.linalg.expm(t * A) @ y0
            assert np.max(np.abs(Y[:, k] - exp)) <= 1e-12
        assert not np.any(xs.states)

    def test_constant_covariance_gaussian_law(self):
        # X = I and A = 0 make the scheme exact: Y_T - y0 ~ N(0, T D)
        D = np.array([[1.0, 0.3], [0.3, 0.5]])
        spec = jm.JointModelSpec(dim_h=2, A=np.zeros((2, 2)), g0=np.zeros(2),
                                 Gamma=np.zeros((2, 3)), D=D,
                                 x_params=flat_x_params())
        T, P = 1.0, 20000
        grid = np.linspace(0.0, T, 21)
        Y, _ = jm.simulate_joint(spec, np.zeros(2), np.eye(2), grid, seed=11,
                                 n_paths=P, keep=[T])
        z = Y[:, -1]
        C = np.cov(z.T, ddof=1)
        target = T * D
        for i in range(2):
            for j in range(2):
                se = np.sqrt((target[i, i] * target[j, j]
                              + target[i, j] ** 2) / P)
                assert abs(C[i, j] - target[i, j]) <= 3 * se
        se_mean = z.std(axis=0, ddof=1) / np.sqrt(P)
        assert np.all(np.abs(z.mean(axis=0)) <= 3 * se_mean)

    def test_characteristic_function_two_resolutions(self, ou_params):
        # the mild-step weak bias sits below the Monte Carlo resolution at
        # this path count, so both step sizes must agree with the transform
        spec = coupled_spec(ou_params)
        x0 = np.eye(2)
        y0 = np.array([0.2, -0.4])
        v = np.array([0.4, -0.3])
        t = 0.5
        exact = jm.joint_transform(spec, x0, 1j * v, np.zeros((2, 2)), t,
                                   y0=y0, tol=1e-11)
        for steps in (10, 40):
            grid = np.linspace(0.0, t, steps + 1)
            Y, _ = jm.simulate_joint(spec, y0, x0, grid, seed=7,
                                     n_paths=20000, keep=[t])
            vals = np.exp(1j * (Y[:, -1] @ v))
            emp = vals.mean()
            se = np.sqrt((vals.real.var(ddof=1)
                          + vals.imag.var(ddof=1)) / vals.size)
            assert abs(emp - exact) <= 3 * se

    def test_reproducible_and_thread_invariant(self, ou_params):
        spec = coupled_spec(ou_params)
        grid = np.linspace(0.0, 0.5, 6)
        y0 = np.zeros(2)
        a = jm.simulate_joint(spec, y0, np.eye(2), grid, seed=5, n_paths=64,
                              threads=1)
        b = jm.simulate_joint(spec, y0, np.eye(2), grid, seed=5, n_paths=64,
                              threads=4)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1].states, b[1].states)

    def test_stationary_start_matches_invariant_mean(self, ou_params):
        spec = coupled_spec(ou_params)
        grid = np.linspace(0.0, 0.25, 3)
        Y, xs = jm.simulate_joint(spec, np.zeros(2), jm.STATIONARY, grid,
                                  seed=9, n_paths=2048)
        law = stat.mean_invariant(ou_params)
        got = xs.states[:, 0].mean(axis=0)
        se = xs.states[:, 0].std(axis=0, ddof=1) / np.sqrt(2048)
        assert np.all(np.abs(got - law) <= 3 * se + 1e-3)

    def test_rejects_keep_time_off_grid(self, ou_params):
        spec = coupled_spec(ou_params)
        with pytest.raises(ValueError):
            jm.simulate_joint(spec, np.zeros(2), np.eye(2),
                              np.linspace(0.0, 1.0, 5), seed=1, keep=[0.3])


class TestJsonRoundtrip:
    def test_roundtrip(self, ou_params):
        spec = coupled_spec(ou_params)
        doc = jm.joint_spec_to_json(spec)
        back = jm.joint_spec_from_json(doc)
        assert back.dim_h == spec.dim_h
        assert np.allclose(back.A, spec.A, atol=1e-15)
        assert np.allclose(back.Gamma, spec.Gamma, atol=1e-15)
        assert np.allclose(back.D, spec.D, atol=1e-15)
        assert np.allclose(back.x_params.b, spec.x_params.b, atol=1e-15)

    def test_rejects_unknown_keys(self, ou_params):
        doc = jm.joint_spec_to_json(coupled_spec(ou_params))
        doc["extra"] = 1
        with pytest.raises((ValueError, AffineLabError)):
            jm.joint_spec_from_json(doc)
