import itertools

import numpy as np
import pytest

from affine_lab import wasserstein as wass


def gaussian_cloud(rng, n_pts, dim, scale=1.0, shift=0.0):
    return scale * rng.normal(size=(n_pts, dim)) + shift


class TestWpExact:
    def test_identical_clouds(self, rng):
        # the quadratic-form cost matrix leaves ~1e-16 noise per entry,
        # which the 1/p root inflates to ~1e-8
        A = gaussian_cloud(rng, 32, 3)
        assert wass.wp_exact(A, A.copy()).distance == pytest.approx(0.0, abs=1e-7)

    def test_singletons(self, rng):
        x, y = rng.normal(size=(1, 4)), rng.normal(size=(1, 4))
        for p in (1.0, 1.5, 2.0):
            assert wass.wp_exact(x, y, p=p).distance == pytest.approx(
                np.linalg.norm(x - y), rel=1e-12)

    def test_matches_permutation_brute_force(self, rng):
        for trial in range(5):
            A = gaussian_cloud(rng, 4, 6)
            B = gaussian_cloud(rng, 4, 6)
            best = min(
                np.mean([np.linalg.norm(A[i] - B[j]) ** 2
                         for i, j in enumerate(perm)])
                for perm in itertools.permutations(range(4)))
            assert wass.wp_exact(A, B, p=2.0).distance == pytest.approx(
                np.sqrt(best), rel=1e-12)

    def test_symmetric(self, rng):
        A, B = gaussian_cloud(rng, 16, 3), gaussian_cloud(rng, 16, 3)
        assert wass.wp_exact(A, B).distance == pytest.approx(
            wass.wp_exact(B, A).distance, rel=1e-12)

    def test_accepts_matrix_clouds(self, rng):
        a = rng.normal(size=(8, 2, 2))
        A = (a + np.transpose(a, (0, 2, 1))) / 2
        assert wass.wp_exact(A, A.copy()).distance == pytest.approx(0.0, abs=1e-7)

    def test_rejects_mismatched_sizes(self, rng):
        with pytest.raises(ValueError):
            wass.wp_exact(gaussian_cloud(rng, 8, 2), gaussian_cloud(rng, 9, 2))

    def test_triangle_inequality(self, rng):
        for _ in range(5):
            A = gaussian_cloud(rng, 24, 3)
            B = gaussian_cloud(rng, 24, 3, shift=0.5)
            C = gaussian_cloud(rng, 24, 3, scale=1.5)
            dab = wass.wp_exact(A, B).distance
            dbc = wass.wp_exact(B, C).distance
            dac = wass.wp_exact(A, C).distance
            assert dac <= dab + dbc + 1e-10

    def test_scale_equivariance(self, rng):
        A, B = gaussian_cloud(rng, 32, 3), gaussian_cloud(rng, 32, 3)
        d1 = wass.wp_exact(A, B).distance
        d3 = wass.wp_exact(3.0 * A, 3.0 * B).distance
        assert d3 == pytest.approx(3.0 * d1, rel=1e-12)

    def test_shrinks_with_sample_size(self):
        meds = []
        for n_pts in (64, 1024):
            dists = []
            for seed in range(5):
                gen = np.random.default_rng(1000 + seed)
                A = gen.normal(size=(n_pts, 3))
                B = gen.normal(size=(n_pts, 3))
                dists.append(wass.wp_exact(A, B).distance)
            meds.append(np.median(dists))
        assert meds[1] < meds[0]


class TestWpSinkhorn:
    def test_identical_clouds_floor(self, rng):
        A = gaussian_cloud(rng, 64, 3)
        res = wass.wp_sinkhorn(A, A.copy(), epsilon=1e-3)
        assert res.distance <= 1e-3

    @pytest.mark.filterwarnings("ignore:sinkhorn did not converge")
    def test_close_to_exact(self, rng):
        A = gaussian_cloud(rng, 512, 3)
        B = gaussian_cloud(rng, 512, 3, shift=0.4)
        exact = wass.wp_exact(A, B).distance
        med = np.median(wass._cost_matrix(A, B, 2.0))
        approx = wass.wp_sinkhorn(A, B, epsilon=0.01 * med).distance
        assert abs(approx - exact) <= 0.05 * exact

    def test_translation_limit(self, rng):
        A = gaussian_cloud(rng, 128, 3)
        c = np.array([0.6, -0.2, 0.3])
        B = A + c
        d = wass.wp_sinkhorn(A, B, epsilon=1e-3).distance
        assert d == pytest.approx(np.linalg.norm(c), rel=0.05)

    def test_rejects_bad_epsilon(self, rng):
        A = gaussian_cloud(rng, 8, 2)
        with pytest.raises(ValueError):
            wass.wp_sinkhorn(A, A, epsilon=0.0)


class TestConvolutionCheck:
    def test_dirac_rho_is_equality(self, rng):
        mu = gaussian_cloud(rng, 64, 3)
        nu = gaussian_cloud(rng, 64, 3, shift=0.3)
        lhs, rhs, ok = wass.convolution_check(np.zeros((64, 3)), mu, nu)
        assert lhs == pytest.approx(rhs, rel=1e-12)
        assert ok

    def test_equal_marginals(self, rng):
        rho = gaussian_cloud(rng, 64, 3)
        mu = gaussian_cloud(rng, 64, 3)
        lhs, rhs, ok = wass.convolution_check(rho, mu, mu.copy())
        assert lhs == pytest.approx(0.0, abs=1e-7)
        assert rhs == pytest.approx(0.0, abs=1e-7)
        assert ok

    def test_random_clouds_contract(self):
        passes = 0
        for seed in range(20):
            gen = np.random.default_rng(4000 + seed)
            a = gen.normal(size=(128, 2, 2))
            rho = np.einsum("pij,pkj->pik", a, a)
            b = gen.normal(size=(128, 2, 2))
            mu = np.einsum("pij,pkj->pik", b, b)
            c = 0.8 * gen.normal(size=(128, 2, 2))
            nu = np.einsum("pij,pkj->pik", c, c) + 0.1 * np.eye(2)
            _, _, ok = wass.convolution_check(rho, mu, nu, seed=seed)
            passes += bool(ok)
        assert passes >= 19


class TestDecayFit:
    def test_exact_exponential(self):
        t = np.linspace(0.5, 4.0, 8)
        rate, _, r2 = wass.decay_fit(t, np.exp(-2.0 * t))
        assert rate == pytest.approx(2.0, rel=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_constant_distances(self):
        t = np.linspace(0.5, 4.0, 6)
        rate, _, _ = wass.decay_fit(t, np.full(6, 0.7))
        assert rate == pytest.approx(0.0, abs=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            wass.decay_fit([1.0, 2.0, 3.0, 4.0], [0.5, 0.0, 0.2, 0.1])

    def test_needs_four_points(self):
        with pytest.raises(ValueError):
            wass.decay_fit([1.0, 2.0, 3.0], [1.0, 0.5, 0.25])
