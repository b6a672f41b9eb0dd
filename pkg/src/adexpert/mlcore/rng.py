"""Counter-based random streams keyed by integer tuples."""

from __future__ import annotations

import numpy as np


def keyed_rng(*key: int) -> np.random.Generator:
    """Independent Philox stream for ``key`` (e.g. ``(seed, tree, node)``).

    The stream depends only on the key, never on how many draws were made
    elsewhere, so work keyed this way can run in any order or in parallel.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def derive_seed(*key: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1, dtype=np.uint32)[0])
