"""Gaussian policy tests: forward pass, densities, exact gradients, checkpoints."""

import math

import numpy as np
import pytest

from riskmaxent.policy import LOG_STD_MAX, LOG_STD_MIN, ActionSample, GaussianPolicy
from riskmaxent.seeding import stream


def make_policy(state_dim=3, action_dim=2, hidden=(8, 8), seed=0):
    policy = GaussianPolicy(state_dim, action_dim, hidden)
    params = policy.init_params(np.random.default_rng(seed))
    return policy, params


def finite_diff_grad(fn, params, h=1e-5, coords=None):
    grad = np.zeros_like(params)
    coords = range(params.size) if coords is None else coords
    for i in coords:
        up = params.copy()
        dn = params.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (fn(up) - fn(dn)) / (2 * h)
    return grad


class TestForwardMean:
    def test_zero_network_outputs_zero(self):
        policy = GaussianPolicy(4, 3, (5, 5))
        params = np.zeros(policy.param_count)
        state = np.random.default_rng(0).normal(size=4)
        np.testing.assert_array_equal(policy.forward_mean(params, state), np.zeros(3))

    def test_manual_single_path(self):
        """1-1-1 chain with hand-picked weights: mu = w3*relu(w2*relu(w1*x+b1)+b2)+b3."""
        policy = GaussianPolicy(1, 1, (1, 1))
        layers = [
            (np.array([[2.0]]), np.array([0.5])),
            (np.array([[-1.5]]), np.array([4.0])),
            (np.array([[3.0]]), np.array([-1.0])),
        ]
        params = policy.pack(layers, np.zeros(1))
        x = 0.7
        h1 = max(2.0 * x + 0.5, 0.0)
        h2 = max(-1.5 * h1 + 4.0, 0.0)
        expected = 3.0 * h2 - 1.0
        assert policy.forward_mean(params, np.array([x]))[0] == pytest.approx(expected, rel=1e-15)

    def test_hidden_unit_permutation_symmetry(self):
        policy, params = make_policy(3, 2, (6, 4), seed=1)
        layers, log_std = policy.unpack(params)
        perm = np.array([1, 0, 2, 3, 4, 5])
        permuted = [
            (layers[0][0][:, perm], layers[0][1][perm]),
            (layers[1][0][perm, :], layers[1][1]),
            layers[2],
        ]
        params_p = policy.pack(permuted, log_std)
        states = np.random.default_rng(2).normal(size=(20, 3))
        np.testing.assert_allclose(
            policy.forward_mean(params_p, states), policy.forward_mean(params, states), rtol=1e-12
        )

    def test_piecewise_linearity_on_fixed_activation_pattern(self):
        policy, params = make_policy(2, 2, (16, 16), seed=3)
        s1 = np.array([0.31, 0.40])
        s2 = np.array([0.32, 0.41])  # close enough to share the ReLU pattern
        for lam in (0.2, 0.5, 0.9):
            blend = lam * s1 + (1 - lam) * s2
            expected = lam * policy.forward_mean(params, s1) + (1 - lam) * policy.forward_mean(
                params, s2
            )
            np.testing.assert_allclose(policy.forward_mean(params, blend), expected, atol=1e-9)


class TestSampling:
    def test_vanishing_variance_returns_mean(self):
        policy, params = make_policy(seed=4)
        layers, _ = policy.unpack(params)
        params = policy.pack(layers, np.full(2, -30.0))
        state = np.array([0.1, -0.2, 0.5])
        sample = policy.sample_action(params, state, np.random.default_rng(0))
        np.testing.assert_allclose(sample.action, policy.forward_mean(params, state), atol=1e-10)

    def test_deterministic_under_seed(self):
        policy, params = make_policy(seed=5)
        state = np.array([0.3, 0.3, -1.0])
        a1 = policy.sample_action(params, state, np.random.default_rng(99))
        a2 = policy.sample_action(params, state, np.random.default_rng(99))
        np.testing.assert_array_equal(a1.action, a2.action)
        assert a1.log_prob == a2.log_prob

    def test_empirical_mean_clt_bound(self):
        policy, params = make_policy(seed=6)
        state = np.tile(np.array([0.5, -0.5, 0.2]), (100_000, 1))
        actions, _ = policy.sample_actions(params, state, np.random.default_rng(7))
        mu = policy.forward_mean(params, state[0])
        sigma = np.exp(policy.log_std(params))
        bound = 4.0 * sigma / math.sqrt(100_000)
        assert np.all(np.abs(actions.mean(axis=0) - mu) < bound)

    def test_sample_log_prob_matches_log_prob(self):
        policy, params = make_policy(seed=8)
        state = np.array([1.0, 2.0, 3.0])
        for s in range(5):
            sample = policy.sample_action(params, state, np.random.default_rng(s))
            assert sample.log_prob == pytest.approx(
                policy.log_prob(params, state, sample.action), abs=1e-12
            )


class TestLogProb:
    def test_density_at_mean_unit_sigma(self):
        policy = GaussianPolicy(2, 2, (4, 4))
        params = np.zeros(policy.param_count)  # mean 0, log_std 0
        value = policy.log_prob(params, np.array([0.4, -0.4]), np.zeros(2))
        assert value == pytest.approx(-math.log(2 * math.pi), abs=1e-12)

    def test_matches_direct_density_oracle(self):
        policy, params = make_policy(seed=9)
        rng = np.random.default_rng(10)
        for _ in range(25):
            state = rng.normal(size=3)
            action = rng.normal(size=2)
            mu = policy.forward_mean(params, state)
            sigma = np.exp(policy.log_std(params))
            expected = sum(
                -0.5 * ((a - m) / s) ** 2 - math.log(s) - 0.5 * math.log(2 * math.pi)
                for a, m, s in zip(action, mu, sigma)
            )
            assert policy.log_prob(params, state, action) == pytest.approx(expected, abs=1e-12)

    def test_log_std_shift_lowers_density_at_mean_by_q(self):
        policy, params = make_policy(seed=11)
        layers, log_std = policy.unpack(params)
        state = np.array([0.2, 0.1, 0.9])
        mu = policy.forward_mean(params, state)
        base = policy.log_prob(params, state, mu)
        shifted = policy.pack(layers, log_std + 1.0)
        assert policy.log_prob(shifted, state, mu) == pytest.approx(base - 2.0, abs=1e-12)


class TestLogProbGrad:
    def test_zero_residual_kills_mean_path(self):
        policy, params = make_policy(seed=12)
        state = np.array([0.5, 0.5, -0.5])
        mu = policy.forward_mean(params, state)
        grad = policy.log_prob_grad(params, state, mu)
        ls_start = policy.param_count - policy.action_dim
        np.testing.assert_array_equal(grad[:ls_start], np.zeros(ls_start))
        np.testing.assert_allclose(grad[ls_start:], -np.ones(policy.action_dim), atol=1e-12)

    def test_matches_finite_differences_small_net_exhaustive(self):
        rng = np.random.default_rng(13)
        policy, params = make_policy(2, 2, (8, 8), seed=13)
        worst = 0.0
        for _ in range(20):
            state = rng.normal(size=2)
            action = rng.normal(size=2)
            grad = policy.log_prob_grad(params, state, action)
            fd = finite_diff_grad(lambda p: policy.log_prob(p, state, action), params)
            denom = max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, np.linalg.norm(grad - fd) / denom)
        assert worst < 1e-4

    def test_matches_finite_differences_large_net_sampled(self):
        rng = np.random.default_rng(14)
        policy, params = make_policy(2, 2, (300, 300), seed=14)
        state = rng.normal(size=2)
        action = rng.normal(size=2)
        grad = policy.log_prob_grad(params, state, action)
        coords = rng.choice(policy.param_count, size=150, replace=False)
        fd = finite_diff_grad(lambda p: policy.log_prob(p, state, action), params, coords=coords)
        for i in coords:
            assert grad[i] == pytest.approx(fd[i], rel=1e-4, abs=1e-7)

    def test_weighted_grad_is_weighted_sum_of_per_sample_grads(self):
        policy, params = make_policy(3, 2, (6, 6), seed=15)
        rng = np.random.default_rng(16)
        states = rng.normal(size=(5, 3))
        actions = rng.normal(size=(5, 2))
        weights = rng.uniform(0.1, 2.0, size=5)
        combined = policy.weighted_log_prob_grad(params, states, actions, weights)
        direct = sum(
            w * policy.log_prob_grad(params, s, a)
            for w, s, a in zip(weights, states, actions)
        )
        np.testing.assert_allclose(combined, direct, rtol=1e-10, atol=1e-12)


class TestFisher:
    def test_fvp_matches_dense_fisher_on_tiny_net(self):
        policy, params = make_policy(2, 1, (3, 3), seed=17)
        rng = np.random.default_rng(18)
        # move biases off zero so no pre-activation sits exactly on a ReLU
        # kink, where the finite-difference Jacobian is ill-defined
        params = params + 0.01 * rng.normal(size=params.size)
        states = rng.normal(size=(6, 2))
        sigma2 = np.exp(2.0 * policy.log_std(params))
        n = policy.param_count
        dense = np.zeros((n, n))
        eps = 1e-6
        # Jacobian of the mean by central differences, mean-path block only
        for s in states:
            jac = np.zeros((1, n))
            for i in range(n - policy.action_dim):
                up = params.copy()
                dn = params.copy()
                up[i] += eps
                dn[i] -= eps
                jac[0, i] = (
                    policy.forward_mean(up, s)[0] - policy.forward_mean(dn, s)[0]
                ) / (2 * eps)
            dense += jac.T @ jac / sigma2[0]
        dense /= len(states)
        dense[-1, -1] = 2.0  # log-std block
        v = rng.normal(size=n)
        fvp = policy.fisher_vector_product(params, states, v)
        np.testing.assert_allclose(fvp, dense @ v, rtol=1e-4, atol=1e-8)

    def test_kl_zero_for_identical_params(self):
        policy, params = make_policy(seed=19)
        states = np.random.default_rng(20).normal(size=(10, 3))
        assert policy.kl_to(params, params, states) == pytest.approx(0.0, abs=1e-15)

    def test_kl_closed_form_log_std_only(self):
        policy = GaussianPolicy(2, 1, (3,))
        params_old = np.zeros(policy.param_count)
        params_new = params_old.copy()
        params_new[-1] = 0.5  # log-std shift only, means are both zero
        states = np.random.default_rng(21).normal(size=(4, 2))
        expected = 0.5 + 0.5 * math.exp(-1.0) - 0.5
        assert policy.kl_to(params_old, params_new, states) == pytest.approx(expected, rel=1e-12)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        policy, params = make_policy(3, 2, (7, 5), seed=22)
        path = tmp_path / "ck.bin"
        policy.save_checkpoint(params, path)
        loaded_policy, loaded = GaussianPolicy.load_checkpoint(path)
        assert loaded_policy.dims == policy.dims
        np.testing.assert_array_equal(loaded, params)

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(ValueError):
            GaussianPolicy.load_checkpoint(path)

    def test_clamp_log_std(self):
        policy, params = make_policy(seed=23)
        layers, _ = policy.unpack(params)
        wild = policy.pack(layers, np.array([-40.0, 9.0]))
        clamped = policy.clamp_log_std(wild)
        np.testing.assert_array_equal(
            policy.log_std(clamped), [LOG_STD_MIN, LOG_STD_MAX]
        )
