"""Splittable counter-based random streams.

Every stochastic routine in the library draws from a Philox generator keyed
by (master seed, *stream key) through numpy's SeedSequence spawn mechanism.
Distinct keys give statistically independent streams, so batches of paths can
be simulated in any order (or in parallel) and still reproduce bit-identical
results.
"""

from __future__ import annotations

import os

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for stream `key` under `master_seed`."""
    seq = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def path_rng(master_seed: int, episode: int, path: int) -> np.random.Generator:
    """Generator for one simulated path, keyed by (seed, episode, path)."""
    return stream(master_seed, episode, path)


def thread_cap() -> int:
    """Worker-thread cap from JUMPRL_THREADS (default 1 = sequential)."""
    raw = os.environ.get("JUMPRL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
