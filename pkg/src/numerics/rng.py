"""Deterministic random streams keyed by (seed, stream id)."""

from typing import Tuple

import numpy as np

# Smallest positive double; keeps log(-log(u)) finite.
_TINY = np.nextafter(0.0, 1.0)


class RngStream:
    """Counter-based generator (Philox) addressed by a seed and a stream id.

    Equal (seed, stream id, child path) triples produce identical draws on
    every platform; distinct ids yield independent sequences.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: Tuple[int, ...] = ()):
        if not 0 <= seed < 2**64 or not 0 <= stream_id < 2**64:
            raise ValueError("seed and stream id must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = (self.stream_id,) + tuple(_path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream, e.g. one per level, episode or step."""
        return RngStream(self.seed, self.stream_id, self.path[1:] + (int(index),))

    def uniform(self, size=None) -> np.ndarray:
        """Draws from the open interval (0, 1)."""
        u = self._gen.random(size)
        return np.maximum(u, _TINY)

    def gumbel(self, size=None) -> np.ndarray:
        """Standard Gumbel(0, 1) draws via -log(-log(u))."""
        return -np.log(-np.log(self.uniform(size)))

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self.path})"
