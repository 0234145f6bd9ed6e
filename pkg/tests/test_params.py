import numpy as np
import pytest

from affine_lab import cone
import affine_lab.params as mp


def atom_m(w, xi):
    return {"w": w, "xi": xi}


def ou_instance(n=2, g=-1.0, b=None):
    b = np.eye(n) if b is None else np.asarray(b, dtype=float)
    return mp.make_params(n, b, cone.lyapunov_superop(g * np.eye(n)))


class TestSmallJumpCompensator:
    def test_empty(self):
        m = mp.atomic_measure([], 2)
        assert np.allclose(mp.small_jump_compensator(m), 0.0)

    def test_small_atom(self):
        xi = np.diag([0.3, 0.4])  # hs norm 0.5
        m = mp.atomic_measure([(2.0, xi)], 2)
        assert np.allclose(mp.small_jump_compensator(m), 2.0 * xi, atol=1e-14)

    def test_big_atom_excluded(self):
        xi = 3.0 * np.eye(1)
        m = mp.atomic_measure([(1.0, xi)], 1)
        assert np.allclose(mp.small_jump_compensator(m), 0.0)


class TestValidate:
    def test_plain_ou_passes(self):
        p = mp.make_params(2, np.eye(2), cone.lyapunov_superop(-np.eye(2)),
                           validate_now=False)
        rep = mp.validate(p)
        assert rep.ok and rep.drift_condition and rep.quasi_monotone

    def test_drift_condition_fails_without_drift(self):
        xi = np.diag([0.3, 0.1])
        p = mp.make_params(2, np.zeros((2, 2)),
                           cone.lyapunov_superop(-np.eye(2)),
                           m_atoms=[(1.0, xi)], validate_now=False)
        rep = mp.validate(p)
        assert not rep.drift_condition and not rep.ok

    def test_quasi_monotonicity_fails_with_bare_mu(self):
        # B = 0 provides no inward pull to offset the state coupling
        p = mp.make_params(2, np.eye(2), cone.zero_superop(2),
                           mu_atoms=[(np.eye(2), 0.5 * np.eye(2))],
                           validate_now=False)
        rep = mp.validate(p, n_probe=100)
        assert not rep.quasi_monotone and not rep.ok

    def test_deterministic_given_seed(self):
        p = ou_instance()
        a = mp.validate(p, seed=5)
        b = mp.validate(p, seed=5)
        assert a.quasi_monotone_min == b.quasi_monotone_min


def trace_mixing_superop(c, lam=0.0):
    """Self-adjoint map u -> c(tr(u) I - u) - lam u; its value on an
    orthogonal rank-one pair (vv', ww') with |v|=|w|=1 is exactly c, so
    it dominates any state-coupling term with norm below c."""
    return cone.superop_from_map(
        2, lambda u: c * (np.trace(u) * np.eye(2) - u) - lam * u)


class TestEffectiveDrift:
    def test_small_atoms_leave_drift_alone(self, statedep_params):
        # every atom of the bundled spec sits inside the unit ball
        p = statedep_params
        assert all(cone.hs_norm(s) <= 1.0 for s in p.m.sites)
        assert all(cone.hs_norm(s) <= 1.0 for s in p.mu.sites)
        b_hat, B_hat = mp.effective_drift(p)
        assert np.allclose(b_hat, p.b)
        assert np.allclose(B_hat.matrix, p.B.matrix.T)

    def test_big_m_atom_shifts_constant_drift(self):
        p = mp.make_params(2, np.eye(2), cone.lyapunov_superop(-np.eye(2)),
                           m_atoms=[(1.0, 2.0 * np.eye(2))])
        b_hat, _ = mp.effective_drift(p)
        assert np.allclose(b_hat, np.eye(2) + 2.0 * np.eye(2), atol=1e-14)

    def test_big_mu_atom_is_rank_one_update(self, rng):
        M = np.diag([0.4, 0.2])
        xi = 2.0 * np.eye(2)
        p = mp.make_params(2, np.eye(2), cone.lyapunov_superop(-2.0 * np.eye(2)),
                           mu_atoms=[(M, xi)])
        _, B_hat = mp.effective_drift(p)
        diff = B_hat.matrix - p.B.matrix.T
        assert np.linalg.matrix_rank(diff, tol=1e-10) == 1
        for _ in range(5):
            a = rng.normal(size=(2, 2))
            u = (a + a.T) / 2.0
            got = cone.unvec(diff @ cone.vec(u), 2)
            want = cone.trace_inner(xi, u) * M / cone.hs_norm(xi) ** 2
            assert np.allclose(got, want, atol=1e-12)


class TestJumpRates:
    def test_x_zero_gives_m_weights(self, statedep_params):
        rates = mp.jump_rates(statedep_params, np.zeros((2, 2)))
        weights = sorted(statedep_params.m.weights) + [0.0] * statedep_params.mu.n_atoms
        assert sorted(r for r, _ in rates) == pytest.approx(sorted(weights))

    def test_state_coupling_value(self):
        xi = np.diag([1.0, 0.0])  # hs norm 1
        p = mp.make_params(2, np.eye(2), trace_mixing_superop(1.5),
                           mu_atoms=[(np.eye(2), xi)])
        (rate, site), = mp.jump_rates(p, np.eye(2))
        assert rate == pytest.approx(2.0)
        assert np.allclose(site, xi)

    def test_mu_part_linear_in_x(self, rng):
        p = mp.make_params(2, np.eye(2), trace_mixing_superop(2.0),
                           m_atoms=[(0.5, np.diag([0.2, 0.1]))],
                           mu_atoms=[(np.diag([0.4, 0.3]), 0.5 * np.eye(2))])
        a = rng.normal(size=(2, 2))
        x = a @ a.T
        r1 = np.array([r for r, _ in mp.jump_rates(p, x)])
        r2 = np.array([r for r, _ in mp.jump_rates(p, 2.0 * x)])
        r0 = np.array([r for r, _ in mp.jump_rates(p, np.zeros((2, 2)))])
        assert np.allclose(r2 - r0, 2.0 * (r1 - r0), atol=1e-12)


class TestInvariants:
    def test_drift_additive_in_measures(self):
        big1, big2 = 2.0 * np.eye(2), np.diag([3.0, 1.0])
        base = dict(dim=2, b=np.eye(2), B=cone.lyapunov_superop(-np.eye(2)))
        p1 = mp.make_params(m_atoms=[(1.0, big1)], **base)
        p2 = mp.make_params(m_atoms=[(0.5, big2)], **base)
        p12 = mp.make_params(m_atoms=[(1.0, big1), (0.5, big2)], **base)
        b0 = np.eye(2)
        assert np.allclose(mp.effective_drift(p12)[0] - b0,
                           (mp.effective_drift(p1)[0] - b0)
                           + (mp.effective_drift(p2)[0] - b0), atol=1e-13)

    def test_b_hat_equals_b_star_without_mu(self):
        p = mp.make_params(2, np.eye(2), cone.lyapunov_superop(-np.eye(2)),
                           m_atoms=[(1.0, 2.0 * np.eye(2))])
        _, B_hat = mp.effective_drift(p)
        assert np.array_equal(B_hat.matrix, p.B.matrix.T)

    def test_rates_nonnegative_on_cone(self, statedep_params, rng):
        worst = 0.0
        for _ in range(10_000):
            a = rng.normal(size=(2, 2))
            rates = mp.jump_rates(statedep_params, a @ a.T)
            worst = min(worst, min(r for r, _ in rates))
        assert worst >= 0.0  # negative values are clamped at tolerance


class TestJson:
    def test_roundtrip(self, statedep_params):
        doc = mp.params_to_json(statedep_params)
        q = mp.params_from_json(doc)
        assert q.dim == statedep_params.dim
        assert np.allclose(q.b, statedep_params.b)
        assert np.allclose(q.B.matrix, statedep_params.B.matrix)
        assert np.allclose(q.m.weights, statedep_params.m.weights)
        assert np.allclose(q.m.sites, statedep_params.m.sites)
        assert np.allclose(q.mu.masses, statedep_params.mu.masses)
        assert np.allclose(q.mu.sites, statedep_params.mu.sites)

    def test_lyapunov_shortcut(self):
        doc = {"dim": 2, "b": [[1.0, 0.0], [0.0, 1.0]],
               "B": {"lyapunov": [[-1.0, 0.0], [0.0, -1.0]]},
               "m": [], "mu": []}
        p = mp.params_from_json(doc)
        assert np.allclose(p.B.matrix,
                           cone.lyapunov_superop(-np.eye(2)).matrix)
