"""Percentile (VaR) estimation and the risk-sensitive policy gradient.

The gradient assembles per-mini-batch entropy estimates and score
accumulators into the tail-weighted update

    g = 1/(alpha N) * sum_i f_i * (H_i - v) * 1(H_i <= v),    v = VaR_alpha

optionally with the baseline b = -v, under which the subtracted VaR cancels
and each included term becomes f_i * H_i. Reduction order is fixed by
ascending batch id so results are independent of input permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, DivergentBound, EmptyBatch

# Guard against float fuzz in alpha*N when the product is an exact integer
# (e.g. 0.2 * 40): without it the ceiling can land one rank too high.
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class BatchScore:
    """One mini-batch's entropy estimate and score accumulator.

    ``score`` may be ``None`` for batches known to fall outside the
    percentile; the gradient only reads scores of included batches.
    """

    entropy: float
    score: Optional[np.ndarray]
    batch_id: int


@dataclass(frozen=True)
class RiskConfig:
    """Percentile level and baseline switch for the gradient estimator."""

    alpha: float
    baseline_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


def percentile_rank(n: int, alpha: float) -> int:
    """1-indexed order-statistic rank ceil(alpha * n)."""
    return max(1, math.ceil(alpha * n - _CEIL_EPS))


def estimate_var(entropies: Sequence[float], alpha: float) -> float:
    """Value-at-risk as the ceil(alpha*N)-th ascending order statistic."""
    values = np.asarray(entropies, dtype=np.float64)
    if values.size == 0:
        raise EmptyBatch("cannot estimate VaR from an empty batch")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    rank = percentile_rank(values.size, alpha)
    return float(np.sort(values, kind="stable")[rank - 1])


def cvar_gradient(batches: Sequence[BatchScore], config: RiskConfig) -> np.ndarray:
    """Tail-weighted Monte Carlo policy gradient over mini-batches.

    Ties H == VaR are included. With ``baseline_enabled`` the VaR
    subtraction cancels against the baseline and included terms contribute
    f*H; otherwise they contribute f*(H - VaR).
    """
    if len(batches) == 0:
        raise EmptyBatch("cvar_gradient requires at least one batch")
    ordered = sorted(batches, key=lambda b: b.batch_id)
    entropies = np.array([b.entropy for b in ordered], dtype=np.float64)
    var = estimate_var(entropies, config.alpha)

    shape = None
    for b in ordered:
        if b.score is not None:
            if shape is None:
                shape = b.score.shape
            elif b.score.shape != shape:
                raise DimensionMismatch(
                    f"score shapes differ: {shape} vs {b.score.shape}"
                )
    if shape is None:
        raise DimensionMismatch("no batch carries a score vector")

    included = [b for b in ordered if b.entropy <= var]
    terms = np.zeros((len(included),) + shape, dtype=np.float64)
    for i, b in enumerate(included):
        if b.score is None:
            raise DimensionMismatch(
                f"batch {b.batch_id} is inside the percentile but has no score"
            )
        coeff = b.entropy if config.baseline_enabled else b.entropy - var
        terms[i] = coeff * b.score
    # Fixed pairwise reduction over ascending batch_id.
    total = np.sum(terms, axis=0)
    return total / (config.alpha * len(ordered))


def bias_bound(score_bound_u: float, alpha: float, baseline_b: float) -> float:
    """Upper bound U * alpha * b on the expected bias of the baselined gradient."""
    if score_bound_u < 0.0:
        raise ValueError("score bound must be nonnegative")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    return score_bound_u * alpha * baseline_b


def critical_sample_size(
    delta: float, eta: float, width_delta: float, u: float, alpha: float, b: float
) -> float:
    """Sample count above which the unbaselined estimator's percentile error
    concentrates below the baselined estimator's bias bound.

    Returns log(2/delta) / (2 eta^2 min(U^2 alpha^2 b^2, Delta^2)).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if eta <= 0.0 or width_delta <= 0.0:
        raise ValueError("eta and width_delta must be positive")
    denom_min = min((u * alpha * b) ** 2, width_delta**2)
    if denom_min == 0.0:
        raise DivergentBound("min(U^2 a^2 b^2, Delta^2) is zero")
    return math.log(2.0 / delta) / (2.0 * eta**2 * denom_min)
