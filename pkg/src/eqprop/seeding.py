"""Stateless RNG derivation.

Every random draw in the package comes from a generator derived from the
run seed plus a fixed namespace path, never from a shared stream whose
position depends on call order.  That is what makes checkpoint-resume
replay bitwise-exact: epoch 7's shuffle is a pure function of
(seed, NS_SHUFFLE, 7) no matter what ran before it.
"""

from __future__ import annotations

import numpy as np

# namespace tags; values are part of the reproducibility contract
NS_INIT = 0  # weight initialization, per parameter-group index
NS_SHUFFLE = 1  # per-epoch training-set permutation
NS_SUBSET = 2  # dataset subsampling
NS_TOY = 3  # synthetic toy samples
NS_CURVES = 4  # curve-export element selection


def rng_for(seed: int, *path: int) -> np.random.Generator:
    """Generator for (seed, path...); stateless and order-independent."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))
