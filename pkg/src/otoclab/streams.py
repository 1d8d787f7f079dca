"""Keyed deterministic random streams.

Every stochastic unit of work in a campaign (one unitary draw, one cell of
shots) derives its own generator from the master seed plus a structured key,
so results are independent of worker scheduling and campaigns can be resumed
or recomputed per unitary index.
"""

from __future__ import annotations

import numpy as np

STREAM_CUE = 1  # (seed, STREAM_CUE, unitary_index): local-unitary draws
STREAM_CELL = 2  # (seed, STREAM_CELL, unitary_index, branch, state_id, time_index)
STREAM_INIT_STATE = 3  # (seed, STREAM_INIT_STATE): fixed initial-state unitaries
STREAM_ENTROPY_CELL = 4  # (seed, STREAM_ENTROPY_CELL, unitary_index, time_index)


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by (seed, *key); identical keys give identical streams."""
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) & 0xFFFFFFFF for k in key))
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy))
