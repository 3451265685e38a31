"""Deterministic random-stream derivation.

Every stochastic entry point in this package takes an integer seed and
derives the streams it needs through ``SeedSequence`` spawn keys on top of
the counter-based Philox generator.  Two consequences:

* results are independent of the order in which jobs run, because each
  job addresses its own stream by key rather than by draw position;
* a vector of per-particle draws is generated once per step from a single
  keyed stream, so splitting the particle loop across threads cannot
  change the numbers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream", "derive_seed"]


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator addressed by ``(seed, key...)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def derive_seed(seed: int, *key: int) -> int:
    """Derive a child integer seed, for APIs that take seeds rather than streams."""
    state = np.random.SeedSequence(seed, spawn_key=key).generate_state(2, np.uint64)
    return int(state[0])
