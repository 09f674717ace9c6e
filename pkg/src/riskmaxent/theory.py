"""Numerical verification of the diameter and entropy-gap bounds on small
tabular environment classes.

All quantities use the discrete state metric d(s, s') = 1(s != s'), under
which the 1-Wasserstein distance between distributions equals total
variation. Exact marginals come from the dynamic-programming recursion, so
every bound is checked against an exactly computed left-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .environments.tabular import TabularCMP, exact_marginal, policy_kernel
from .errors import DegenerateSupport, InvalidLipschitz
from .seeding import DOMAIN_INSTANCE, stream


@dataclass(frozen=True)
class TabularClass:
    """CMPs sharing state/action spaces and the initial distribution."""

    members: List[TabularCMP]
    horizon: int

    def __post_init__(self):
        if not self.members:
            raise ValueError("class must contain at least one CMP")
        first = self.members[0]
        for m in self.members[1:]:
            if m.transitions.shape != first.transitions.shape:
                raise ValueError("all members must share state and action spaces")
            if not np.array_equal(m.initial, first.initial):
                raise ValueError("all members must share the initial distribution")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Total variation distance (1/2) sum |p_i - q_i|."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have equal length")
    return 0.5 * float(np.abs(p - q).sum())


def exact_pi_diameter(cls: TabularClass, policy_matrix: np.ndarray) -> float:
    """Largest TV distance between the marginals one policy induces across
    the class."""
    marginals = [exact_marginal(m, policy_matrix, cls.horizon) for m in cls.members]
    worst = 0.0
    for i in range(len(marginals)):
        for j in range(i + 1, len(marginals)):
            worst = max(worst, tv_distance(marginals[i], marginals[j]))
    return worst


def pi_diameter_bound(cls: TabularClass, policy_matrix: np.ndarray) -> float:
    """Policy-specific diameter bound: max over ordered pairs (P', P) of
    T * E_{s ~ d_pi^P, a ~ pi}[ d_TV(P'(.|s,a), P(.|s,a)) ]."""
    pi = np.asarray(policy_matrix, dtype=np.float64)
    t = cls.horizon
    worst = 0.0
    for ref in cls.members:
        d_ref = exact_marginal(ref, pi, t)
        for other in cls.members:
            if other is ref:
                continue
            step_tv = 0.5 * np.abs(other.transitions - ref.transitions).sum(axis=2)
            expected = float(np.einsum("s,sa,sa->", d_ref, pi, step_tv))
            worst = max(worst, t * expected)
    return worst


def kernel_lipschitz_constant(cmp: TabularCMP, policy_matrix: np.ndarray) -> float:
    """Lipschitz constant of the policy-averaged kernel under the discrete
    metric: max over state pairs of d_TV(P^pi(.|s'), P^pi(.|s))."""
    kernel = policy_kernel(cmp, policy_matrix)
    n = kernel.shape[0]
    worst = 0.0
    for i in range(n):
        diff = 0.5 * np.abs(kernel[i + 1 :] - kernel[i]).sum(axis=1)
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


def diameter_bound(cls: TabularClass, lipschitz_l: float, horizon: Optional[int] = None) -> float:
    """Policy-independent diameter bound (1 - L^T)/(1 - L) * sup d_TV over
    state-action pairs and class pairs. Requires L in (0, 1)."""
    if not 0.0 < lipschitz_l < 1.0:
        raise InvalidLipschitz(f"Lipschitz constant must be in (0, 1), got {lipschitz_l}")
    t = horizon if horizon is not None else cls.horizon
    sup_tv = 0.0
    for i, a_member in enumerate(cls.members):
        for b_member in cls.members[i + 1 :]:
            per_pair = 0.5 * np.abs(a_member.transitions - b_member.transitions).sum(axis=2)
            sup_tv = max(sup_tv, float(per_pair.max()))
    geom = (1.0 - lipschitz_l**t) / (1.0 - lipschitz_l)
    return geom * sup_tv


def entropy_gap_bound(pi_diameter: float, sigma: float) -> float:
    """Bound D^2/sigma + D*log(1/sigma) on the marginal-entropy gap."""
    if pi_diameter < 0.0:
        raise ValueError("pi-diameter must be nonnegative")
    if sigma == 0.0:
        raise DegenerateSupport("support lower bound sigma must be positive")
    if sigma < 0.0:
        raise ValueError("sigma must be positive")
    return pi_diameter**2 / sigma + pi_diameter * np.log(1.0 / sigma)


def shannon_entropy(dist: np.ndarray) -> float:
    d = np.asarray(dist, dtype=np.float64)
    positive = d[d > 0.0]
    return -float(np.sum(positive * np.log(positive)))


@dataclass(frozen=True)
class BoundReport:
    instance: int
    policy: int
    theorem: str
    exact: float
    bound: float
    satisfied: bool
    excluded: bool
    note: str

    @staticmethod
    def check(instance: int, policy: int, theorem: str, exact: float, bound: float) -> "BoundReport":
        return BoundReport(
            instance=instance,
            policy=policy,
            theorem=theorem,
            exact=exact,
            bound=bound,
            satisfied=bool(exact <= bound + 1e-9),
            excluded=False,
            note="",
        )

    @staticmethod
    def exclusion(instance: int, policy: int, theorem: str, note: str) -> "BoundReport":
        return BoundReport(
            instance=instance,
            policy=policy,
            theorem=theorem,
            exact=float("nan"),
            bound=float("nan"),
            satisfied=True,
            excluded=True,
            note=note,
        )


def random_tabular_class(
    rng: np.random.Generator,
    n_states: int = 4,
    n_actions: int = 2,
    n_members: int = 2,
    horizon: int = 4,
    concentration: float = 1.0,
) -> TabularClass:
    """Random class of CMPs sharing D, with Dirichlet transition rows."""
    initial = rng.dirichlet(np.full(n_states, concentration))
    members = [
        TabularCMP(
            rng.dirichlet(np.full(n_states, concentration), size=(n_states, n_actions)),
            initial,
        )
        for _ in range(n_members)
    ]
    return TabularClass(members=members, horizon=horizon)


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def verify_bounds(
    n_instances: int,
    seed: int,
    policies_per_instance: int = 10,
    max_states: int = 6,
    max_actions: int = 3,
    max_horizon: int = 5,
) -> List[BoundReport]:
    """Random-instance suite checking the three bounds; one report row per
    (instance, theorem, policy), with exclusions recorded, not hidden."""
    reports: List[BoundReport] = []
    for inst in range(n_instances):
        rng = stream(seed, DOMAIN_INSTANCE, inst)
        n_states = int(rng.integers(2, max_states + 1))
        n_actions = int(rng.integers(1, max_actions + 1))
        horizon = int(rng.integers(1, max_horizon + 1))
        n_members = int(rng.integers(2, 4))
        smooth = rng.uniform(0.5, 6.0)
        cls = random_tabular_class(
            rng, n_states, n_actions, n_members, horizon, concentration=smooth
        )
        for pol_idx in range(policies_per_instance):
            pi = random_policy(rng, n_states, n_actions)
            exact = exact_pi_diameter(cls, pi)
            reports.append(
                BoundReport.check(inst, pol_idx, "pi_diameter", exact, pi_diameter_bound(cls, pi))
            )

            lipschitz = max(kernel_lipschitz_constant(m, pi) for m in cls.members)
            if lipschitz < 1.0 and lipschitz > 0.0:
                reports.append(
                    BoundReport.check(
                        inst, pol_idx, "diameter", exact, diameter_bound(cls, lipschitz)
                    )
                )
            else:
                reports.append(
                    BoundReport.exclusion(
                        inst, pol_idx, "diameter", f"kernel constant {lipschitz:.3f} outside (0,1)"
                    )
                )

            marginals = [exact_marginal(m, pi, horizon) for m in cls.members]
            sigma = min(float(m.min()) for m in marginals)
            if sigma > 0.0:
                gap = max(
                    abs(shannon_entropy(a) - shannon_entropy(b))
                    for i, a in enumerate(marginals)
                    for b in marginals[i + 1 :]
                )
                reports.append(
                    BoundReport.check(
                        inst, pol_idx, "entropy_gap", gap, entropy_gap_bound(exact, sigma)
                    )
                )
            else:
                reports.append(
                    BoundReport.exclusion(
                        inst, pol_idx, "entropy_gap", "a marginal has zero support"
                    )
                )
    return reports
