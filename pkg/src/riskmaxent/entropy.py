"""Non-parametric entropy and KL estimation from state samples.

All estimators are built on k-nearest-neighbor statistics of a T x p point
set under the Euclidean metric. The on-policy entropy estimator is the
constant-corrected Singh form

    H_hat = -(1/T) sum_t log[ k Gamma(p/2+1) / (T r_t^p pi^(p/2)) ] + ln k - psi(k)

with r_t the distance from point t to its k-th neighbor (self excluded).
The importance-weighted variants replace the uniform 1/T mass with
externally supplied per-particle weights and reduce exactly to the
on-policy forms when the weights are uniform.

Neighbor queries are exact. Small point sets use a brute-force distance
matrix with ties broken by lower sample index; sets too large for an
O(T^2) matrix fall back to a KD-tree, which is also exact and
deterministic for fixed input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry, DegenerateWeights, InsufficientSamples, NonFiniteWeight

# Above this sample count the O(T^2) distance matrix is not worth its
# memory; the KD-tree path is exact as well.
_BRUTE_FORCE_MAX = 4096


@dataclass(frozen=True)
class EntropyEstimate:
    """A single entropy estimate in nats with its estimator settings."""

    value: float
    k: int
    sample_count: int


@dataclass(frozen=True)
class ImportanceWeights:
    """Per-step trajectory importance weights.

    ``raw[t]`` is the product of policy ratios up to step t; ``normalized``
    rescales raw to sum to one over the trajectory.
    """

    raw: np.ndarray
    normalized: np.ndarray


@dataclass(frozen=True)
class KnnGraph:
    """Exact k-NN structure of a fixed point set, reusable across weights."""

    neighbor_idx: np.ndarray   # (T, k) int, ordered nearest-first
    kth_dist: np.ndarray       # (T,) distance to the k-th neighbor
    dim: int
    k: int


def _validate_points(points: np.ndarray, k: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError(f"points must be a T x p matrix, got shape {pts.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    t = pts.shape[0]
    if t <= k:
        raise InsufficientSamples(f"need at least k+1={k + 1} samples, got {t}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite coordinates")
    return pts


def knn_graph(points: np.ndarray, k: int) -> KnnGraph:
    """Compute the exact k-NN index sets and k-th neighbor distances.

    Self points are excluded. On the brute-force path distance ties are
    broken by lower sample index, which makes the ranking a deterministic
    function of the input.
    """
    pts = _validate_points(points, k)
    t, p = pts.shape
    if t <= _BRUTE_FORCE_MAX:
        sq = np.sum(pts * pts, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
        np.maximum(d2, 0.0, out=d2)
        np.fill_diagonal(d2, np.inf)
        rows = np.arange(t)[:, None]
        cand = np.argpartition(d2, k - 1, axis=1)[:, :k]
        cand_d = d2[rows, cand]
        # order candidates by (distance, index); lexsort keys are last-first
        perm = np.lexsort((cand, cand_d), axis=1)
        order = cand[rows, perm]
        kth2 = d2[rows[:, 0], order[:, -1]]
        # A tie straddling the selection boundary can drop the lower-index
        # point; rows where more than k entries fall within the k-th
        # distance are re-ranked exactly.
        ambiguous = np.flatnonzero((d2 <= kth2[:, None]).sum(axis=1) > k)
        for r in ambiguous:
            full = np.argsort(d2[r], kind="stable")[:k]
            order[r] = full
            kth2[r] = d2[r, full[-1]]
        kth = np.sqrt(kth2)
    else:
        tree = cKDTree(pts)
        dist, idx = tree.query(pts, k=k + 1)
        # First column is the self point (distance 0); drop it. With
        # coincident points the self column may land elsewhere, but then
        # the k-th distance is 0 and the caller raises anyway.
        order = idx[:, 1:]
        kth = dist[:, -1]
    return KnnGraph(neighbor_idx=order, kth_dist=kth, dim=p, k=k)


def _log_unit_ball_const(p: int) -> float:
    # log of Gamma(p/2 + 1) / pi^(p/2), the inverse unit-ball volume
    return math.lgamma(p / 2.0 + 1.0) - (p / 2.0) * math.log(math.pi)


def _digamma_int(k: int) -> float:
    # psi(k) for integer k >= 1: -euler_gamma + H_{k-1}, exact to float precision
    return -0.5772156649015328606 + sum(1.0 / i for i in range(1, k))


def knn_entropy(points: np.ndarray, k: int) -> EntropyEstimate:
    """Constant-corrected k-NN differential entropy of a point set (nats)."""
    graph = knn_graph(points, k)
    return knn_entropy_from_graph(graph, points.shape[0])


def knn_entropy_from_graph(graph: KnnGraph, sample_count: int) -> EntropyEstimate:
    """Entropy from a precomputed neighbor structure (uniform particle mass)."""
    t, p, k = sample_count, graph.dim, graph.k
    if np.any(graph.kth_dist == 0.0):
        raise DegenerateGeometry("a k-th neighbor distance is exactly zero")
    log_terms = (
        math.log(k)
        + _log_unit_ball_const(p)
        - math.log(t)
        - p * np.log(graph.kth_dist)
    )
    value = -float(np.mean(log_terms)) + math.log(k) - _digamma_int(k)
    return EntropyEstimate(value=value, k=k, sample_count=t)


def iw_entropy(points: np.ndarray, weights: np.ndarray, k: int) -> EntropyEstimate:
    """Importance-weighted k-NN entropy.

    ``weights`` are per-particle masses (normally summing to 1 over the
    set); with uniform weights the estimate equals ``knn_entropy`` exactly.
    """
    graph = knn_graph(points, k)
    return iw_entropy_from_graph(graph, np.asarray(weights, dtype=np.float64))


def iw_entropy_from_graph(graph: KnnGraph, weights: np.ndarray) -> EntropyEstimate:
    """Importance-weighted entropy from a precomputed neighbor structure."""
    t = graph.neighbor_idx.shape[0]
    p, k = graph.dim, graph.k
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (t,):
        raise ValueError(f"weights must have shape ({t},), got {w.shape}")
    if np.any(graph.kth_dist == 0.0):
        raise DegenerateGeometry("a k-th neighbor distance is exactly zero")
    neigh_mass = w[graph.neighbor_idx].sum(axis=1)
    # Mass-zero neighborhoods contribute nothing (x log x -> 0).
    log_terms = np.zeros(t)
    pos = neigh_mass > 0.0
    log_terms[pos] = np.log(neigh_mass[pos]) + _log_unit_ball_const(p) - p * np.log(
        graph.kth_dist[pos]
    )
    value = -float(np.sum((neigh_mass / k) * log_terms)) + math.log(k) - _digamma_int(k)
    return EntropyEstimate(value=value, k=k, sample_count=t)


def iw_kl(points: np.ndarray, weights: np.ndarray, k: int) -> float:
    """Importance-weighted k-NN estimate of the KL divergence.

    Returns (1/T) sum_t log[(k/T) / sum_{j in N_t^k} w_j]. Zero for
    uniform weights.
    """
    graph = knn_graph(points, k)
    return iw_kl_from_graph(graph, np.asarray(weights, dtype=np.float64))


def iw_kl_from_graph(graph: KnnGraph, weights: np.ndarray) -> float:
    """KL estimate from a precomputed neighbor structure."""
    t = graph.neighbor_idx.shape[0]
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (t,):
        raise ValueError(f"weights must have shape ({t},), got {w.shape}")
    neigh_mass = w[graph.neighbor_idx].sum(axis=1)
    if np.any(neigh_mass <= 0.0):
        raise DegenerateWeights("a neighborhood carries non-positive weight")
    return float(np.mean(math.log(graph.k / t) - np.log(neigh_mass)))


def importance_weights(
    log_prob_target: np.ndarray, log_prob_behavior: np.ndarray
) -> ImportanceWeights:
    """Per-step trajectory importance weights between two policies.

    Takes the per-step action log-densities under the target and behavior
    policies and returns cumulative-product ratios, accumulated in log
    space: raw[t] = prod_{z<=t} pi'(a_z|s_z) / pi(a_z|s_z).
    """
    lt = np.asarray(log_prob_target, dtype=np.float64)
    lb = np.asarray(log_prob_behavior, dtype=np.float64)
    if lt.shape != lb.shape or lt.ndim != 1:
        raise ValueError("log-prob vectors must be 1-D and the same length")
    log_ratio = lt - lb
    if not np.all(np.isfinite(log_ratio)):
        raise NonFiniteWeight("non-finite log-ratio between target and behavior")
    cum = np.cumsum(log_ratio)
    raw = np.exp(cum)
    shifted = cum - cum.max()
    expw = np.exp(shifted)
    normalized = expw / expw.sum()
    return ImportanceWeights(raw=raw, normalized=normalized)
