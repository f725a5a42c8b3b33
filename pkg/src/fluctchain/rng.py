"""Counter-based random streams for reproducible parallel ensembles.

Every replica owns a Philox stream keyed by (experiment seed, replica id),
so the set of random draws made on behalf of a replica is independent of
worker scheduling, batching, or how many other replicas run alongside it.
"""

import numpy as np

__all__ = ["stream", "substream"]

def stream(seed: int, replica: int) -> np.random.Generator:
    """Return the root generator for one replica of one experiment."""
    return substream(seed, replica, 0)


def substream(seed: int, replica: int, purpose: int) -> np.random.Generator:
    """Return an independent generator keyed by (seed, replica, purpose).

    Distinct purpose values give statistically independent streams; the
    same triple always reproduces the same draw sequence.  Philox keys are
    two 64-bit words, so replica and purpose are packed into the second
    word (32 bits each).
    """
    if not (0 <= replica < 2**32 and 0 <= purpose < 2**32):
        raise ValueError("replica and purpose must fit in 32 bits")
    key = np.array(
        [np.uint64(seed) & np.uint64(2**64 - 1),
         (np.uint64(replica) << np.uint64(32)) | np.uint64(purpose)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))
