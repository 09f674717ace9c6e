"""Sparse-reward fine-tuning with a KL-constrained natural gradient step.

Each iteration collects episodes up to a step budget, computes
discounted-reward-to-go advantages against a constant mean baseline, solves
the trust-region step via conjugate gradient on Fisher-vector products
(analytic diagonal-Gaussian Fisher averaged over a fixed subsample of the
visited states), and backtracks until the sampled KL stays within the
limit and the sampled surrogate does not degrade. A failed line search
applies a zero step and records it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .environments import GoalTask, GridworldConfig, reset, step_batch
from .environments.gridworld import task_reward_batch
from .policy import GaussianPolicy
from .seeding import DOMAIN_EVAL, DOMAIN_FINETUNE, stream

CG_ITERS = 10
CG_DAMPING = 1e-2
BACKTRACK_LIMIT = 10
FISHER_SUBSAMPLE = 1500


@dataclass(frozen=True)
class FinetuneConfig:
    iterations: int
    horizon: int
    steps_per_iteration: int
    kl_limit: float
    discount: float
    hidden: Tuple[int, ...] = (300, 300)
    seed: int = 0

    def __post_init__(self):
        if self.kl_limit <= 0.0:
            raise ValueError("kl_limit must be positive")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if self.steps_per_iteration < self.horizon:
            raise ValueError("step budget must cover at least one episode")

    @property
    def episodes_per_iteration(self) -> int:
        return self.steps_per_iteration // self.horizon


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    avg_return: float
    sampled_kl: float
    surrogate_improvement: float
    accepted: bool


def _rollout(
    policy: GaussianPolicy,
    params: np.ndarray,
    config: GridworldConfig,
    n_episodes: int,
    horizon: int,
    seed_parts: Tuple[int, ...],
    stochastic: bool,
):
    """Lockstep batch of episodes; returns (states, actions) arrays."""
    q, p = policy.action_dim, policy.state_dim
    cur = np.empty((n_episodes, p))
    noise = np.empty((n_episodes, horizon, q))
    slope = np.empty((n_episodes, horizon))
    for j in range(n_episodes):
        rng = stream(*seed_parts, j)
        cur[j] = reset(config, rng)
        noise[j] = rng.standard_normal((horizon, q))
        slope[j] = rng.normal(config.slope.mean, config.slope.std, horizon)
    sigma = np.exp(policy.log_std(params)) if stochastic else None
    states = np.empty((n_episodes, horizon, p))
    actions = np.empty((n_episodes, horizon, q))
    for t in range(horizon):
        mu = policy.forward_mean(params, cur)
        act = mu + sigma * noise[:, t, :] if stochastic else mu
        states[:, t] = cur
        actions[:, t] = act
        cur = step_batch(config, cur, act, slope[:, t], check=False)
    return states, actions


def _conjugate_gradient(fvp, b: np.ndarray, iters: int) -> np.ndarray:
    x = np.zeros_like(b)
    r = b.copy()
    d = b.copy()
    r_dot = float(r @ r)
    for _ in range(iters):
        if r_dot < 1e-18:
            break
        hd = fvp(d)
        alpha = r_dot / float(d @ hd)
        x += alpha * d
        r -= alpha * hd
        r_dot_new = float(r @ r)
        d = r + (r_dot_new / r_dot) * d
        r_dot = r_dot_new
    return x


def finetune(
    policy: GaussianPolicy,
    initial_params: np.ndarray,
    config: GridworldConfig,
    task: GoalTask,
    cfg: FinetuneConfig,
) -> Tuple[np.ndarray, List[IterationRecord]]:
    """Optimize the sparse task return from the given initialization."""
    params = initial_params.copy()
    n_ep, horizon = cfg.episodes_per_iteration, cfg.horizon
    records: List[IterationRecord] = []

    for it in range(cfg.iterations):
        states, actions = _rollout(
            policy, params, config, n_ep, horizon,
            (cfg.seed, DOMAIN_FINETUNE, it), stochastic=True,
        )
        rewards = task_reward_batch(task, states)
        avg_return = float(rewards.sum(axis=1).mean())

        # discounted reward-to-go, constant mean baseline
        returns = np.empty_like(rewards)
        acc = np.zeros(n_ep)
        for t in range(horizon - 1, -1, -1):
            acc = rewards[:, t] + cfg.discount * acc
            returns[:, t] = acc
        advantages = (returns - returns.mean()).reshape(-1)

        flat_states = states.reshape(-1, policy.state_dim)
        flat_actions = actions.reshape(-1, policy.action_dim)
        n_samples = flat_states.shape[0]
        grad = policy.weighted_log_prob_grad(
            params, flat_states, flat_actions, advantages / n_samples
        )

        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < 1e-12:
            records.append(IterationRecord(it, avg_return, 0.0, 0.0, False))
            continue

        stride = max(1, n_samples // FISHER_SUBSAMPLE)
        fisher_states = flat_states[::stride]

        def fvp(v):
            return policy.fisher_vector_product(params, fisher_states, v, damping=CG_DAMPING)

        direction = _conjugate_gradient(fvp, grad, CG_ITERS)
        quad = float(direction @ fvp(direction))
        if quad <= 0.0:
            records.append(IterationRecord(it, avg_return, 0.0, 0.0, False))
            continue
        full_step = np.sqrt(2.0 * cfg.kl_limit / quad) * direction

        logp_old = policy.log_prob(params, flat_states, flat_actions)
        surrogate_old = float(np.mean(advantages))  # ratios are 1 at the old point

        accepted = False
        kl_val = 0.0
        improvement = 0.0
        scale = 1.0
        for _ in range(BACKTRACK_LIMIT + 1):
            candidate = params + scale * full_step
            kl_val = policy.kl_to(params, candidate, fisher_states)
            logp_new = policy.log_prob(candidate, flat_states, flat_actions)
            surrogate = float(np.mean(np.exp(logp_new - logp_old) * advantages))
            improvement = surrogate - surrogate_old
            if kl_val <= cfg.kl_limit and improvement >= 0.0:
                params = policy.clamp_log_std(candidate)
                accepted = True
                break
            scale *= 0.5
        records.append(
            IterationRecord(it, avg_return, float(kl_val), float(improvement), accepted)
        )
    return params, records


def evaluate_return(
    policy: GaussianPolicy,
    params: np.ndarray,
    config: GridworldConfig,
    task: GoalTask,
    episodes: int,
    cfg: FinetuneConfig,
) -> float:
    """Average undiscounted return of the mean-action policy over fresh
    episodes; deterministic given the config seed."""
    states, _ = _rollout(
        policy, params, config, episodes, cfg.horizon,
        (cfg.seed, DOMAIN_EVAL), stochastic=False,
    )
    return float(task_reward_batch(task, states).sum(axis=1).mean())
