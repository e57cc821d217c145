"""Seedable random streams for sketching.

Every random draw in this package goes through an `RngStream`, addressed by a
root seed plus a 64-bit stream id. Substreams are derived by hashing the parent
id with a label (splitmix64 finalizer), so trajectories, steps and stages each
get an independent, reproducible stream. Normal samples come from numpy's
PCG64 generator (ziggurat method); complex normals are (G1 + i*G2)/sqrt(2),
unit variance per complex entry.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    # splitmix64 finalizer, the usual constants
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_stream_id(parent_id: int, label: int) -> int:
    """Hash a (parent, label) pair into a child stream id."""
    if label < 0:
        raise ValueError("substream label must be nonnegative")
    return _splitmix64(_splitmix64(parent_id & _MASK64) ^ (label & _MASK64))


class RngStream:
    """A deterministic stream of Gaussian matrices.

    Identified by (seed, stream_id); equal identities replay equal sequences.
    Drawing advances internal state, `reset()` rewinds to the start, and
    `substream(label)` derives an independent child stream at its own origin.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id) & _MASK64
        self.reset()

    def reset(self) -> None:
        """Rewind this stream to its first sample."""
        ss = np.random.SeedSequence([self.seed, self.stream_id])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, label: int) -> "RngStream":
        """Independent child stream; does not consume from this stream."""
        return RngStream(self.seed, derive_stream_id(self.stream_id, label))

    def gaussian_matrix(self, rows: int, cols: int) -> np.ndarray:
        """Draw a rows-by-cols matrix of i.i.d. standard normals."""
        if rows < 0 or cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        return self._gen.standard_normal((rows, cols))

    def complex_gaussian_matrix(self, rows: int, cols: int) -> np.ndarray:
        """Complex normals (G1 + i*G2)/sqrt(2), E|g|^2 = 1, E[g^2] = 0."""
        if rows < 0 or cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        g = self._gen.standard_normal((2, rows, cols))
        return (g[0] + 1j * g[1]) / np.sqrt(2.0)

    def test_matrix(self, rows: int, cols: int, complex_field: bool = False) -> np.ndarray:
        """Gaussian sketch matrix in the requested scalar field."""
        if complex_field:
            return self.complex_gaussian_matrix(rows, cols)
        return self.gaussian_matrix(rows, cols)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id:#x})"
