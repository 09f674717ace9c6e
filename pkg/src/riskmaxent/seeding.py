"""Deterministic derivation of random streams from a single master seed.

Every source of randomness in a run is a `numpy` PCG64 generator seeded by
``SeedSequence([master_seed, domain, *indices])``. Because the stream
identity is a function of (seed, domain, index) only, results never depend
on scheduling or worker count. Domains are fixed small integers so that the
mapping is stable across versions.
"""

from __future__ import annotations

import numpy as np

# Stream domains. Never renumber: checkpointed experiments depend on them.
DOMAIN_ENV_PICK = 1       # which environment a mini-batch is drawn in
DOMAIN_TRAJECTORY = 2     # per-trajectory action noise / env noise / reset
DOMAIN_POLICY_INIT = 3    # policy weight initialization
DOMAIN_EVAL = 4           # evaluation rollouts
DOMAIN_TASKS = 5          # goal-task generation
DOMAIN_FINETUNE = 6       # fine-tuning rollouts
DOMAIN_INSTANCE = 7       # random tabular instances


def stream(master_seed: int, domain: int, *indices: int) -> np.random.Generator:
    """Return the generator identified by (master_seed, domain, indices)."""
    seq = np.random.SeedSequence([int(master_seed), int(domain), *map(int, indices)])
    return np.random.Generator(np.random.PCG64(seq))
