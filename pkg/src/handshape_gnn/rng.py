"""Seedable counter-based random streams; nothing in the package touches a
global RNG."""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """A Philox-backed generator for `seed`, optionally forked by stream keys.

    make_rng(seed, k) yields an independent stream per k, so concurrent runs
    (grid-search points, seeds) never share state.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in stream))
    return np.random.Generator(np.random.Philox(seq))
