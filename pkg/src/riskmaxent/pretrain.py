"""Percentile-sensitive maximum-entropy pre-training loop.

Each epoch draws N trajectories in mini-batches of B (every mini-batch
from a single environment draw), then runs an off-policy inner loop: the
importance weights of every particle are recomputed against the current
iterate, each mini-batch entropy is re-estimated with the weighted
estimator over its pooled B*T states, and a tail-weighted gradient step is
applied, until the pooled KL estimate over the whole batch leaves the
trust region or an iteration cap is reached. The last iterate inside the
region is kept.

Mini-batch neighbor structures depend only on the collected states, so
they are built once per epoch and shared by all inner iterations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import entropy as ent
from .environments import EnvironmentClass, reset, sample_environment, step_batch
from .errors import DegenerateWeights
from .policy import GaussianPolicy
from .risk import BatchScore, RiskConfig, cvar_gradient, estimate_var, percentile_rank
from .seeding import (
    DOMAIN_ENV_PICK,
    DOMAIN_EVAL,
    DOMAIN_POLICY_INIT,
    DOMAIN_TRAJECTORY,
    stream,
)

@dataclass(frozen=True)
class TrainerConfig:
    """Pre-training settings.

    ``compute_dtype`` controls the inner-loop network math: float32 is
    plenty for rollout weighting and twice as fast on the large matrix
    products, while parameters, updates, and gradient reductions always
    stay float64. Tests that compare against float64 references pin it.
    """

    epochs: int
    horizon: int
    trajectories: int
    batch_size: int
    alpha: float
    learning_rate: float
    kl_threshold: float
    k_neighbors: int
    max_offpolicy_iters: int = 30
    baseline_enabled: bool = True
    hidden: Tuple[int, ...] = (300, 300)
    seed: int = 0
    compute_dtype: str = "float32"

    def __post_init__(self):
        if self.trajectories % self.batch_size != 0:
            raise ValueError("trajectory count must be divisible by the mini-batch size")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.kl_threshold <= 0.0 or self.learning_rate < 0.0:
            raise ValueError("kl_threshold must be positive and learning_rate nonnegative")
        if self.horizon <= self.k_neighbors:
            raise ValueError("horizon must exceed the neighbor count")

    @property
    def n_mini_batches(self) -> int:
        return self.trajectories // self.batch_size


@dataclass(frozen=True)
class CollectedBatch:
    """One epoch's trajectories in dense layout.

    Rows of ``states``/``actions``/``log_prob_behavior`` are grouped by
    mini-batch: rows [m*B, (m+1)*B) belong to mini-batch m, which was
    collected in configuration ``env_indices[m]``.
    """

    states: np.ndarray             # (N, T, p)
    actions: np.ndarray            # (N, T, q)
    log_prob_behavior: np.ndarray  # (N, T), densities at collection time
    env_indices: np.ndarray        # (N/B,) config index per mini-batch
    batch_size: int

    @property
    def n_trajectories(self) -> int:
        return self.states.shape[0]

    @property
    def n_mini_batches(self) -> int:
        return self.env_indices.shape[0]

    def mini_batch_rows(self, m: int) -> slice:
        return slice(m * self.batch_size, (m + 1) * self.batch_size)


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    mean_entropy: float
    cvar_entropy: float
    var_entropy: float
    per_config_entropy: Dict[str, float]
    offpolicy_steps: int
    kl_stop: float


def trajectory_importance_weights(
    policy: GaussianPolicy,
    states: np.ndarray,
    actions: np.ndarray,
    target_params: np.ndarray,
    behavior_params: np.ndarray,
) -> ent.ImportanceWeights:
    """Step-cumulative policy ratios of one trajectory between two parameter
    snapshots, accumulated in log space."""
    lt = policy.log_prob(target_params, states, actions)
    lb = policy.log_prob(behavior_params, states, actions)
    return ent.importance_weights(np.atleast_1d(lt), np.atleast_1d(lb))


def collect_batch(
    policy: GaussianPolicy,
    params: np.ndarray,
    env_class: EnvironmentClass,
    cfg: TrainerConfig,
    epoch: int,
) -> CollectedBatch:
    """Sample N trajectories of length T, B per environment draw.

    Trajectory j uses the stream (seed, trajectory-domain, epoch, j) for its
    reset point, action noise and slope noise, so the result is a pure
    function of (params, class, config, epoch).
    """
    n, t, b = cfg.trajectories, cfg.horizon, cfg.batch_size
    q = policy.action_dim
    p = policy.state_dim

    env_rng = stream(cfg.seed, DOMAIN_ENV_PICK, epoch)
    env_idx = np.array(
        [sample_environment(env_class, env_rng) for _ in range(cfg.n_mini_batches)],
        dtype=np.int64,
    )

    cur = np.empty((n, p))
    noise = np.empty((n, t, q))
    slope = np.empty((n, t))
    for j in range(n):
        config = env_class.configs[env_idx[j // b]]
        rng = stream(cfg.seed, DOMAIN_TRAJECTORY, epoch, j)
        cur[j] = reset(config, rng)
        noise[j] = rng.standard_normal((t, q))
        slope[j] = rng.normal(config.slope.mean, config.slope.std, t)

    states = np.empty((n, t, p))
    actions = np.empty((n, t, q))
    log_std = policy.log_std(params)
    sigma = np.exp(log_std)
    log_prob = (
        -0.5 * np.sum(noise * noise, axis=2) - np.sum(log_std) - 0.5 * q * np.log(2 * np.pi)
    )

    groups = [
        (env_class.configs[i], np.flatnonzero(np.repeat(env_idx, b) == i))
        for i in np.unique(env_idx)
    ]
    for step_t in range(t):
        mu = policy.forward_mean(params, cur)
        act = mu + sigma * noise[:, step_t, :]
        states[:, step_t] = cur
        actions[:, step_t] = act
        for config, rows in groups:
            cur[rows] = step_batch(
                config, cur[rows], act[rows], slope[rows, step_t], check=False
            )
    return CollectedBatch(
        states=states,
        actions=actions,
        log_prob_behavior=log_prob,
        env_indices=env_idx,
        batch_size=b,
    )


def _normalized_weights(logp: np.ndarray, logp_behavior: np.ndarray) -> np.ndarray:
    """Per-trajectory self-normalized cumulative ratios, rows summing to 1."""
    cum = np.cumsum(logp - logp_behavior, axis=1)
    cum -= cum.max(axis=1, keepdims=True)
    w = np.exp(cum)
    w /= w.sum(axis=1, keepdims=True)
    return w


def offpolicy_update(
    policy: GaussianPolicy,
    params: np.ndarray,
    batch: CollectedBatch,
    env_class: EnvironmentClass,
    cfg: TrainerConfig,
    epoch: int,
    trace: Optional[List] = None,
) -> Tuple[np.ndarray, EpochReport]:
    """Run the trust-region inner loop on one collected batch.

    When ``trace`` is a list, one record per applied step is appended with
    the inner-iteration index, KL, mini-batch scores and the raw update,
    for estimator cross-checks.
    """
    n, t = batch.n_trajectories, cfg.horizon
    n_b, b, k = batch.n_mini_batches, batch.batch_size, cfg.k_neighbors
    risk = RiskConfig(alpha=cfg.alpha, baseline_enabled=cfg.baseline_enabled)
    dtype = np.dtype(cfg.compute_dtype)

    flat_states = batch.states.reshape(n * t, -1)
    flat_actions = batch.actions.reshape(n * t, -1)
    states_c = flat_states.astype(dtype)
    actions_c = flat_actions.astype(dtype)

    batch_graphs = [
        ent.knn_graph(flat_states[m * b * t : (m + 1) * b * t], k) for m in range(n_b)
    ]
    pool_graph = ent.knn_graph(flat_states, k)

    def forward_all(theta_c: np.ndarray):
        mu, cache = policy.forward_with_cache(theta_c, states_c)
        logp = policy.log_prob_from_mean(theta_c, mu, actions_c)
        return logp.astype(np.float64).reshape(n, t), mu, cache

    # Behavior log-densities re-evaluated through the same compute path as
    # the targets, so the ratios at h = 0 are exactly one.
    logp_behavior, _, _ = forward_all(params.astype(dtype))

    def entropies_at(w_norm: np.ndarray) -> np.ndarray:
        values = np.empty(n_b)
        for m in range(n_b):
            rows = batch.mini_batch_rows(m)
            pooled = w_norm[rows].reshape(-1) / b
            values[m] = ent.iw_entropy_from_graph(batch_graphs[m], pooled).value
        return values

    def pooled_kl(w_norm: np.ndarray) -> float:
        try:
            return ent.iw_kl_from_graph(pool_graph, w_norm.reshape(-1) / n)
        except DegenerateWeights:
            return np.inf

    kept = params
    kept_kl = 0.0
    kept_steps = 0
    report_entropies: Optional[np.ndarray] = None

    theta = params
    for h in range(cfg.max_offpolicy_iters + 1):
        theta_c = theta.astype(dtype)
        logp, mu, cache = forward_all(theta_c)
        w_norm = _normalized_weights(logp, logp_behavior)
        kl = pooled_kl(w_norm) if h > 0 else 0.0
        entropies = entropies_at(w_norm)
        if h == 0:
            report_entropies = entropies
        if kl > cfg.kl_threshold:
            break
        kept, kept_kl, kept_steps = theta, kl, h
        if h == cfg.max_offpolicy_iters:
            break

        var = estimate_var(entropies, cfg.alpha)
        scores: List[BatchScore] = []
        for m in range(n_b):
            if entropies[m] <= var:
                rows = batch.mini_batch_rows(m)
                w_score = (t * w_norm[rows]).reshape(-1).astype(dtype)
                row_slice = slice(rows.start * t, rows.stop * t)
                grad = policy.weighted_log_prob_grad(
                    theta_c,
                    states_c[row_slice],
                    actions_c[row_slice],
                    w_score,
                    mu=mu[row_slice],
                    cache=[c[row_slice] for c in cache],
                ).astype(np.float64)
            else:
                grad = None
            scores.append(BatchScore(entropy=float(entropies[m]), score=grad, batch_id=m))
        update = cvar_gradient(scores, risk)
        if trace is not None:
            trace.append({"h": h, "kl": kl, "scores": scores, "update": update})
        theta = policy.clamp_log_std(theta + cfg.learning_rate * update)

    var0 = estimate_var(report_entropies, cfg.alpha)
    rank = percentile_rank(n_b, cfg.alpha)
    tail = np.sort(report_entropies, kind="stable")[:rank]
    per_config: Dict[str, float] = {}
    for i, config in enumerate(env_class.configs):
        mask = batch.env_indices == i
        per_config[config.name] = float(np.mean(report_entropies[mask])) if mask.any() else float("nan")
    report = EpochReport(
        epoch=epoch,
        mean_entropy=float(np.mean(report_entropies)),
        cvar_entropy=float(np.mean(tail)),
        var_entropy=float(var0),
        per_config_entropy=per_config,
        offpolicy_steps=kept_steps,
        kl_stop=float(kept_kl),
    )
    return kept, report


def pretrain(
    cfg: TrainerConfig,
    env_class: EnvironmentClass,
    policy: Optional[GaussianPolicy] = None,
    initial_params: Optional[np.ndarray] = None,
    on_epoch: Optional[Callable[[EpochReport, np.ndarray], None]] = None,
) -> Tuple[GaussianPolicy, np.ndarray, List[EpochReport]]:
    """Run the full pre-training loop; deterministic in (cfg, env_class)."""
    if policy is None:
        policy = GaussianPolicy(2, 2, hidden=cfg.hidden)
    params = (
        initial_params.copy()
        if initial_params is not None
        else policy.init_params(stream(cfg.seed, DOMAIN_POLICY_INIT))
    )
    reports: List[EpochReport] = []
    for epoch in range(cfg.epochs):
        batch = collect_batch(policy, params, env_class, cfg, epoch)
        params, report = offpolicy_update(policy, params, batch, env_class, cfg, epoch)
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report, params)
    return policy, params, reports


@dataclass(frozen=True)
class EntropyEvaluation:
    config_name: str
    mean_entropy: float
    cvar_entropy: float
    var_entropy: float
    batch_entropies: np.ndarray
    states: np.ndarray  # (n, T, p) rollout states, e.g. for occupancy maps


def evaluate_entropy(
    policy: GaussianPolicy,
    params: np.ndarray,
    env_class: EnvironmentClass,
    config_index: int,
    cfg: TrainerConfig,
    n_trajectories: Optional[int] = None,
) -> EntropyEvaluation:
    """On-policy entropy of rollouts in one fixed configuration.

    Uses evaluation streams (seed, eval-domain, config, j), so scores are
    comparable across checkpoints trained with the same seed.
    """
    n = n_trajectories if n_trajectories is not None else cfg.trajectories
    t, b, k = cfg.horizon, cfg.batch_size, cfg.k_neighbors
    if n % b != 0:
        raise ValueError("evaluation trajectory count must be divisible by batch size")
    config = env_class.configs[config_index]
    q, p = policy.action_dim, policy.state_dim

    cur = np.empty((n, p))
    noise = np.empty((n, t, q))
    slope = np.empty((n, t))
    for j in range(n):
        rng = stream(cfg.seed, DOMAIN_EVAL, config_index, j)
        cur[j] = reset(config, rng)
        noise[j] = rng.standard_normal((t, q))
        slope[j] = rng.normal(config.slope.mean, config.slope.std, t)

    sigma = np.exp(policy.log_std(params))
    states = np.empty((n, t, p))
    for step_t in range(t):
        mu = policy.forward_mean(params, cur)
        act = mu + sigma * noise[:, step_t, :]
        states[:, step_t] = cur
        cur = step_batch(config, cur, act, slope[:, step_t], check=False)

    n_b = n // b
    values = np.empty(n_b)
    for m in range(n_b):
        pooled = states[m * b : (m + 1) * b].reshape(b * t, p)
        values[m] = ent.knn_entropy(pooled, k).value
    rank = percentile_rank(n_b, cfg.alpha)
    tail = np.sort(values, kind="stable")[:rank]
    return EntropyEvaluation(
        config_name=config.name,
        mean_entropy=float(np.mean(values)),
        cvar_entropy=float(np.mean(tail)),
        var_entropy=float(estimate_var(values, cfg.alpha)),
        batch_entropies=values,
        states=states,
    )
