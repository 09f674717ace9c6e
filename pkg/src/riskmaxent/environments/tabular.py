"""Explicit finite controlled Markov processes for exact-computation oracles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TabularCMP:
    """Transition tensor P[s, a, s'] (row-stochastic per (s, a)) and initial
    distribution D over states."""

    transitions: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.transitions, dtype=np.float64)
        d = np.asarray(self.initial, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transitions must be (S, A, S), got {p.shape}")
        if d.shape != (p.shape[0],):
            raise ValueError("initial distribution must have one entry per state")
        if np.any(p < 0) or not np.allclose(p.sum(axis=2), 1.0, atol=1e-12):
            raise ValueError("each transitions[s, a, :] must be a distribution")
        if np.any(d < 0) or not np.isclose(d.sum(), 1.0, atol=1e-12):
            raise ValueError("initial must be a distribution")
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "initial", d)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]


def exact_marginal(cmp: TabularCMP, policy_matrix: np.ndarray, horizon: int) -> np.ndarray:
    """Average state distribution (1/T) sum_{t<T} d_t under a stationary policy.

    d_0 = D and d_{t}(s') = sum_{s,a} d_{t-1}(s) pi(a|s) P(s'|s,a).
    """
    pi = np.asarray(policy_matrix, dtype=np.float64)
    if pi.shape != (cmp.n_states, cmp.n_actions):
        raise ValueError(f"policy matrix must be {(cmp.n_states, cmp.n_actions)}, got {pi.shape}")
    if np.any(pi < 0) or not np.allclose(pi.sum(axis=1), 1.0, atol=1e-10):
        raise ValueError("policy matrix rows must be distributions")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    kernel = np.einsum("sa,sat->st", pi, cmp.transitions)
    d = cmp.initial.copy()
    acc = d.copy()
    for _ in range(horizon - 1):
        d = d @ kernel
        acc += d
    return acc / horizon


def policy_kernel(cmp: TabularCMP, policy_matrix: np.ndarray) -> np.ndarray:
    """State-to-state kernel P^pi(s'|s) = sum_a pi(a|s) P(s'|s,a)."""
    pi = np.asarray(policy_matrix, dtype=np.float64)
    return np.einsum("sa,sat->st", pi, cmp.transitions)


def rollout_states(
    cmp: TabularCMP, policy_matrix: np.ndarray, horizon: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample n trajectories of visited states, shape (n, horizon)."""
    kernel = policy_kernel(cmp, policy_matrix)
    cum_kernel = np.cumsum(kernel, axis=1)
    states = np.searchsorted(np.cumsum(cmp.initial), rng.random(n), side="right")
    out = np.empty((n, horizon), dtype=np.int64)
    out[:, 0] = states
    for t in range(1, horizon):
        u = rng.random(n)
        states = np.array(
            [np.searchsorted(cum_kernel[s], u_i, side="right") for s, u_i in zip(states, u)]
        )
        out[:, t] = states
    return out
