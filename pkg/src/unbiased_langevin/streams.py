"""Counter-based random streams with auditable draw counts.

Every chain pair (or quad) owns one :class:`CountingStream`. Streams are
Philox generators keyed by ``(seed, stream_id)`` through
:class:`numpy.random.SeedSequence`, so replicate ``i`` sees the same
variates whichever process or worker order runs it. Gaussian variates come
from numpy's ziggurat sampler.
"""

from __future__ import annotations

import numpy as np


class CountingStream:
    """Philox stream that counts the standard normal and uniform variates it hands out.

    Args:
        seed: Root seed (non-negative integer).
        stream_id: Sub-stream index, e.g. the replicate id. ``None`` gives the root stream.
    """

    def __init__(self, seed: int = 0, stream_id: int | tuple | None = None):
        if stream_id is None:
            spawn_key = ()
        elif isinstance(stream_id, tuple):
            spawn_key = tuple(int(s) for s in stream_id)
        else:
            spawn_key = (int(stream_id),)
        self.seed = int(seed)
        self.stream_id = spawn_key
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=spawn_key)
        self._gen = np.random.Generator(np.random.Philox(seq))
        self.gaussian_count = 0
        self.uniform_count = 0

    def normal(self, shape) -> np.ndarray:
        """Standard normal variates of the given shape."""
        out = self._gen.standard_normal(shape)
        self.gaussian_count += out.size
        return out

    def uniform(self) -> float:
        """One uniform variate on [0, 1)."""
        self.uniform_count += 1
        return float(self._gen.random())

    def __repr__(self) -> str:
        return (
            f"CountingStream(seed={self.seed}, stream_id={self.stream_id}, "
            f"gaussians={self.gaussian_count}, uniforms={self.uniform_count})"
        )


def as_stream(rng) -> CountingStream:
    """Accept a CountingStream or an integer seed."""
    if isinstance(rng, CountingStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return CountingStream(int(rng))
    raise TypeError(f"expected a CountingStream or an int seed, got {type(rng).__name__}")
