"""Counter-based random streams.

Every stochastic routine draws from a Philox4x64 generator whose key is
derived from ``(master_seed, *stream_key)`` through ``numpy.random.SeedSequence``.
Each trajectory, trial or sweep point therefore owns a stream that does not
depend on how work is split across threads or chunks.
"""

from __future__ import annotations

import numpy as np

# Stream purposes; the first element of every stream key.
TRAJECTORY = 0
ENSEMBLE = 1
FIRST_PASSAGE = 2
SUCCESS_RATE = 3
NOISE_SCAN = 4
TOY_DATA = 5
LAMBDA_MATCH = 6
SAMPLING = 7

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator for ``(master_seed, *key)``."""
    seq = np.random.SeedSequence(check_seed(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def fresh_seed() -> int:
    """Draw a master seed from OS entropy (to be recorded by the caller)."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])


class LockstepNormals:
    """Standard normal vectors for many streams advancing one step at a time.

    Stream ``i`` yields the same sequence no matter which other streams are
    alive or how large the refill block is, because numpy generators fill
    arrays sequentially.
    """

    def __init__(self, master_seed: int, purpose: int, indices, dim: int, block: int = 1024):
        self.indices = np.asarray(indices, dtype=np.int64)
        self.dim = int(dim)
        self.block = int(block)
        self._gens = [stream(master_seed, purpose, int(i)) for i in self.indices]
        self._buf = np.empty((len(self._gens), self.block, self.dim))
        self._pos = self.block

    def draw(self, active: np.ndarray) -> np.ndarray:
        """Next normal vector for each row position in ``active``; shape (len(active), dim)."""
        if self._pos == self.block:
            for r in active:
                self._buf[r] = self._gens[r].standard_normal((self.block, self.dim))
            self._pos = 0
        out = self._buf[active, self._pos]
        self._pos += 1
        return out
