"""Counter-based random streams.

Each stream is a Philox-4x64 generator keyed from ``(seed, *path)``. Uniforms
are taken from the top 53 bits of successive raw outputs, centred in their
bin so they never hit 0 or 1, and mapped to normals through the inverse
normal CDF. Substreams (``spawn``) extend the key path, so no mutable state
is shared between them.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


class RngStream:
    def __init__(self, seed: int, *path: int):
        if not isinstance(seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
        self.seed = int(seed) & _MASK64
        self.path = tuple(int(p) for p in path)
        entropy = [self.seed, len(self.path), *self.path]
        key = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
        self._bitgen = np.random.Philox(key=key)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"

    def spawn(self, *path: int) -> "RngStream":
        """Independent child stream, e.g. one per sample index."""
        return RngStream(self.seed, *self.path, *path)

    def uniform(self, size) -> np.ndarray:
        """Uniforms in the open interval (0, 1), consumed in row-major order."""
        n = int(np.prod(size, dtype=np.int64))
        raw = self._bitgen.random_raw(n)
        u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return u.reshape(size)

    def normal(self, size) -> np.ndarray:
        return ndtri(self.uniform(size))
