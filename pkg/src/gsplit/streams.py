"""Deterministic random-number substreams.

All randomness in the package flows from a single 64-bit root seed. Each
consumer derives an independent generator from (domain, index), so runs
are reproducible, parallelizable, and order-independent: trial i always
sees the same stream no matter which worker executes it.

Domains:
    RAW_TRIALS      blocks of unconditioned branching trials
    NONEMPTY_TRIALS one stream per retained (nonempty) trial index
    PILOT           adaptive level selection
    SMC             sequential Monte Carlo baseline replications
    COMPARE         splitting-side replications of method comparisons
    CHECKS          self-test and oracle-comparison simulations
"""
from __future__ import annotations

import numpy as np

RAW_TRIALS = 0
NONEMPTY_TRIALS = 1
PILOT = 2
SMC = 3
CHECKS = 4
COMPARE = 5


def substream(seed: int, domain: int, index: int) -> np.random.Generator:
    """Generator for one (domain, index) slot under the given root seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(domain), int(index)))
    return np.random.default_rng(ss)
