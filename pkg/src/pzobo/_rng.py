"""Seeded random streams.

Every random draw goes through numpy's PCG64 bit generator seeded from a
``SeedSequence``. Substreams are addressed by integer keys, so the value
of a draw depends only on ``(seed, keys)`` and never on evaluation order.
"""

import numpy as np

# stream tags
PERTURBATION = 0
BATCH_PATH = 1
OUTER_BATCH = 2
DATA = 3
INIT = 4


def substream(seed, *keys):
    """Return an independent ``Generator`` for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def gaussian_directions(seed, k, Q, p):
    """Draw ``u_{k,1..Q}``; row j comes from its own substream."""
    u = np.empty((Q, p))
    for j in range(Q):
        u[j] = substream(seed, PERTURBATION, k, j).standard_normal(p)
    return u
