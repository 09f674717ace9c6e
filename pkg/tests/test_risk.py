"""Percentile estimator and tail-weighted gradient tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmaxent.errors import DimensionMismatch, DivergentBound, EmptyBatch
from riskmaxent.risk import (
    BatchScore,
    RiskConfig,
    bias_bound,
    critical_sample_size,
    cvar_gradient,
    estimate_var,
)


class TestEstimateVar:
    @pytest.mark.parametrize(
        "alpha,expected", [(0.4, 2.0), (1.0, 5.0), (0.2, 1.0)]
    )
    def test_order_statistic_examples(self, alpha, expected):
        assert estimate_var([5, 1, 3, 2, 4], alpha) == expected

    def test_empty_batch(self):
        with pytest.raises(EmptyBatch):
            estimate_var([], 0.5)

    def test_exact_integer_rank_unaffected_by_float_fuzz(self):
        # 0.2 * 40 must select rank 8, not 9
        values = np.arange(40, dtype=float)
        assert estimate_var(values, 0.2) == values[7]

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60),
        st.floats(0.01, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_var_is_an_element_and_rank_bound(self, values, alpha):
        v = estimate_var(values, alpha)
        assert v in values
        rank = math.ceil(alpha * len(values) - 1e-9)
        assert sum(1 for x in values if x <= v) >= rank


def basis_scores(entropies, dim=None):
    dim = dim or len(entropies)
    return [
        BatchScore(entropy=h, score=np.eye(dim)[i], batch_id=i)
        for i, h in enumerate(entropies)
    ]


class TestCvarGradient:
    def test_alpha_one_is_mean_of_score_times_entropy(self):
        rng = np.random.default_rng(0)
        scores = [
            BatchScore(entropy=float(rng.normal()), score=rng.normal(size=7), batch_id=i)
            for i in range(12)
        ]
        grad = cvar_gradient(scores, RiskConfig(alpha=1.0, baseline_enabled=True))
        direct = np.sum(
            np.stack([b.score * b.entropy for b in scores]), axis=0
        ) / len(scores)
        np.testing.assert_allclose(grad, direct, atol=1e-12)

    def test_hand_case_half_percentile(self):
        """Four unit-basis scores, entropies 1..4, alpha=0.5, baseline on:
        (1/2)(1*e1 + 2*e2)."""
        grad = cvar_gradient(
            basis_scores([1.0, 2.0, 3.0, 4.0]), RiskConfig(alpha=0.5, baseline_enabled=True)
        )
        np.testing.assert_allclose(grad, [0.5, 1.0, 0.0, 0.0], atol=1e-15)

    def test_degenerate_entropies_zero_gradient_without_baseline(self):
        scores = basis_scores([2.5, 2.5, 2.5, 2.5])
        grad = cvar_gradient(scores, RiskConfig(alpha=0.5, baseline_enabled=False))
        np.testing.assert_array_equal(grad, np.zeros(4))

    def test_ties_at_var_included(self):
        scores = basis_scores([1.0, 1.0, 5.0, 6.0])
        grad = cvar_gradient(scores, RiskConfig(alpha=0.25, baseline_enabled=True))
        # VaR = 1.0; both tied batches contribute
        np.testing.assert_allclose(grad, [1.0, 1.0, 0.0, 0.0])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        scores = [
            BatchScore(entropy=float(rng.normal()), score=rng.normal(size=5), batch_id=i)
            for i in range(9)
        ]
        grad = cvar_gradient(scores, RiskConfig(alpha=0.4))
        for seed in range(4):
            shuffled = list(scores)
            np.random.default_rng(seed).shuffle(shuffled)
            np.testing.assert_array_equal(
                cvar_gradient(shuffled, RiskConfig(alpha=0.4)), grad
            )

    def test_included_count_with_distinct_entropies(self):
        rng = np.random.default_rng(5)
        for n, alpha in [(10, 0.3), (7, 0.5), (40, 0.2)]:
            entropies = rng.permutation(n).astype(float)
            v = estimate_var(entropies, alpha)
            assert np.sum(entropies <= v) == math.ceil(alpha * n - 1e-9)

    def test_dimension_mismatch(self):
        scores = [
            BatchScore(entropy=0.0, score=np.zeros(3), batch_id=0),
            BatchScore(entropy=1.0, score=np.zeros(4), batch_id=1),
        ]
        with pytest.raises(DimensionMismatch):
            cvar_gradient(scores, RiskConfig(alpha=1.0))

    def test_missing_score_inside_percentile_raises(self):
        scores = [
            BatchScore(entropy=0.0, score=None, batch_id=0),
            BatchScore(entropy=1.0, score=np.zeros(3), batch_id=1),
        ]
        with pytest.raises(DimensionMismatch):
            cvar_gradient(scores, RiskConfig(alpha=0.5))

    def test_missing_score_outside_percentile_allowed(self):
        scores = [
            BatchScore(entropy=0.0, score=np.ones(3), batch_id=0),
            BatchScore(entropy=1.0, score=None, batch_id=1),
        ]
        grad = cvar_gradient(scores, RiskConfig(alpha=0.5))
        np.testing.assert_allclose(grad, np.zeros(3))


class TestBiasBound:
    def test_product_examples(self):
        assert bias_bound(10.0, 0.2, 0.5) == pytest.approx(1.0)
        assert bias_bound(3.0, 0.7, 0.0) == 0.0
        assert bias_bound(1.0, 1.0, 2.0) == pytest.approx(2.0)


class TestCriticalSampleSize:
    def test_reduces_to_half_log(self):
        # log(2/delta) = 2 when delta = 2/e^2; unit min term
        delta = 2.0 / math.e**2
        assert critical_sample_size(delta, 1.0, 1.0, 1.0, 1.0, 1.0) == pytest.approx(1.0)

    def test_doubling_eta_quarters(self):
        base = critical_sample_size(0.1, 1.0, 0.5, 2.0, 0.3, 1.0)
        assert critical_sample_size(0.1, 2.0, 0.5, 2.0, 0.3, 1.0) == pytest.approx(base / 4)

    def test_numeric_example(self):
        val = critical_sample_size(0.05, 0.5, 10.0, 1.0, 0.2, 1.0)
        assert val == pytest.approx(184.44, abs=0.01)

    def test_zero_denominator(self):
        with pytest.raises(DivergentBound):
            critical_sample_size(0.1, 1.0, 1.0, 0.0, 0.5, 0.0)
