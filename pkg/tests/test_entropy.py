"""Entropy and KL estimator tests against closed-form and hand-computed oracles."""

import math

import numpy as np
import pytest

from riskmaxent.entropy import (
    ImportanceWeights,
    importance_weights,
    iw_entropy,
    iw_kl,
    knn_entropy,
    knn_graph,
)
from riskmaxent.errors import (
    DegenerateGeometry,
    DegenerateWeights,
    InsufficientSamples,
    NonFiniteWeight,
)


def uniform_points(seed, low, high, n=1000, dim=2):
    return np.random.default_rng(seed).uniform(low, high, size=(n, dim))


class TestKnnEntropy:
    def test_uniform_unit_square(self):
        """Closed form: differential entropy of U([0,1]^2) is 0 nats."""
        vals = [knn_entropy(uniform_points(s, 0, 1), 30).value for s in range(20)]
        assert abs(np.mean(vals) - 0.0) < 0.15

    def test_uniform_side_two_square(self):
        """Closed form: differential entropy of U([0,2]^2) is log 4 nats."""
        vals = [knn_entropy(uniform_points(s, 0, 2), 30).value for s in range(20)]
        assert abs(np.mean(vals) - math.log(4.0)) < 0.15

    def test_identical_points_degenerate(self):
        pts = np.ones((50, 2))
        with pytest.raises(DegenerateGeometry):
            knn_entropy(pts, 5)

    def test_insufficient_samples(self):
        pts = np.random.default_rng(0).normal(size=(5, 2))
        with pytest.raises(InsufficientSamples):
            knn_entropy(pts, 5)

    def test_translation_invariance(self):
        pts = uniform_points(3, 0, 1, n=400)
        base = knn_entropy(pts, 10).value
        for shift in ([2.0, -7.5], [0.25, 0.25]):
            assert knn_entropy(pts + np.array(shift), 10).value == pytest.approx(
                base, abs=1e-9
            )

    def test_scaling_law(self):
        """H(a X) = H(X) + p log a for scalar a > 0."""
        pts = uniform_points(4, 0, 1, n=400, dim=3)
        base = knn_entropy(pts, 10).value
        for a in (0.5, 2.0, 11.0):
            expected = base + 3 * math.log(a)
            assert knn_entropy(a * pts, 10).value == pytest.approx(expected, abs=1e-9)

    def test_deterministic_with_distance_ties(self):
        """Equidistant neighbors resolve by lower index, stably across calls."""
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0], [3.0, 3.0]])
        g1 = knn_graph(pts, 3)
        g2 = knn_graph(pts, 3)
        np.testing.assert_array_equal(g1.neighbor_idx, g2.neighbor_idx)
        # the four unit-distance neighbors of the origin tie; lowest indices win
        np.testing.assert_array_equal(np.sort(g1.neighbor_idx[0]), [1, 2, 3])


class TestIwEntropy:
    def test_uniform_weights_reduce_to_knn(self):
        for seed, dim in [(0, 1), (1, 2), (2, 5)]:
            pts = np.random.default_rng(seed).normal(size=(300, dim))
            w = np.full(300, 1.0 / 300)
            assert iw_entropy(pts, w, 12).value == pytest.approx(
                knn_entropy(pts, 12).value, abs=1e-9
            )

    def test_uniform_square_oracle(self):
        vals = []
        for s in range(20):
            pts = uniform_points(s, 0, 1)
            vals.append(iw_entropy(pts, np.full(1000, 1e-3), 30).value)
        assert abs(np.mean(vals)) < 0.15

    def test_single_particle_mass_hand_value(self):
        """Three collinear 1-D points, all mass on the first particle, k=1.

        Only the neighborhood containing particle 0 contributes: point 1 has
        neighbor {0} at distance 1, so its term is (1/1)*ln(Gamma(1.5)*1 /
        (1 * sqrt(pi))) = ln(1/2). Points 0 and 2 have zero-mass
        neighborhoods. Total: -ln(1/2) + ln 1 - psi(1) = ln 2 + gamma.
        """
        pts = np.array([[0.0], [1.0], [3.0]])
        w = np.array([1.0, 0.0, 0.0])
        euler_gamma = 0.5772156649015329
        expected = math.log(2.0) + euler_gamma
        assert iw_entropy(pts, w, 1).value == pytest.approx(expected, abs=1e-12)


class TestIwKl:
    def test_uniform_weights_zero_exact(self):
        """With power-of-two counts the uniform masses are exact binary
        fractions and the estimate is exactly zero."""
        pts = np.random.default_rng(7).normal(size=(256, 2))
        assert iw_kl(pts, np.full(256, 1.0 / 256), 16) == 0.0

    def test_uniform_weights_zero_tol(self):
        pts = np.random.default_rng(8).normal(size=(300, 3))
        assert iw_kl(pts, np.full(300, 1.0 / 300), 10) == pytest.approx(0.0, abs=1e-12)

    def test_doubled_neighborhood_mass(self):
        """Two far-apart mutually-nearest pairs, every neighborhood holding
        mass 2k/T, give exactly -ln 2."""
        pts = np.array([[0.0], [0.01], [100.0], [100.01]])
        w = np.full(4, 0.5)  # each neighborhood mass 0.5 = 2*k/T for k=1, T=4
        assert iw_kl(pts, w, 1) == pytest.approx(-math.log(2.0), abs=1e-12)

    def test_gaussian_pair_matches_closed_form(self):
        """IW estimate vs analytic KL between N(0,1) and N(0.5,1) (=0.125)."""
        rng = np.random.default_rng(11)
        xs = rng.normal(0.0, 1.0, size=(2000, 1))
        log_q = -0.5 * xs[:, 0] ** 2
        log_p = -0.5 * (xs[:, 0] - 0.5) ** 2
        raw = np.exp(log_p - log_q)
        w = raw / raw.sum()
        est = iw_kl(xs, w, 30)
        assert abs(est - 0.125) < 0.1

    def test_zero_mass_neighborhood_raises(self):
        pts = np.array([[0.0], [0.01], [100.0], [100.01]])
        w = np.array([0.5, 0.5, 0.0, 0.0])
        with pytest.raises(DegenerateWeights):
            iw_kl(pts, w, 1)


class TestImportanceWeights:
    def test_identical_policies(self):
        lp = np.random.default_rng(0).normal(size=50)
        iw = importance_weights(lp, lp.copy())
        np.testing.assert_array_equal(iw.raw, np.ones(50))
        np.testing.assert_array_equal(iw.normalized, np.full(50, 1.0 / 50))

    def test_single_step_ratio_two(self):
        iw = importance_weights(np.array([math.log(2.0)]), np.array([0.0]))
        assert iw.raw[0] == pytest.approx(2.0, rel=1e-15)
        assert iw.normalized[0] == 1.0

    def test_two_step_density_ratio_oracle(self):
        """Cumulative ratios match direct density evaluation for two 1-D
        Gaussian policies."""

        def log_norm_pdf(x, mu, sigma):
            return -0.5 * ((x - mu) / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2 * math.pi)

        acts = np.array([0.3, -1.2])
        lt = np.array([log_norm_pdf(a, 0.1, 1.0) for a in acts])
        lb = np.array([log_norm_pdf(a, -0.4, 0.7) for a in acts])
        iw = importance_weights(lt, lb)
        r0 = math.exp(lt[0]) / math.exp(lb[0])
        r1 = math.exp(lt[1]) / math.exp(lb[1])
        np.testing.assert_allclose(iw.raw, [r0, r0 * r1], rtol=1e-12)
        np.testing.assert_allclose(iw.normalized, iw.raw / iw.raw.sum(), rtol=1e-12)

    def test_non_finite_ratio_raises(self):
        with pytest.raises(NonFiniteWeight):
            importance_weights(np.array([0.0, np.inf]), np.zeros(2))

    def test_extreme_log_ratios_stay_normalized(self):
        lt = np.array([-800.0, 0.0, 500.0])
        iw = importance_weights(lt, np.zeros(3))
        assert np.isclose(iw.normalized.sum(), 1.0)
        assert np.all(iw.normalized >= 0.0)
