"""Keyed random streams.

Every random draw in the package comes from a Philox generator keyed by a
``(seed, stream)`` pair, so trials can be generated in any order (or on any
number of workers) and still reproduce bit-for-bit.
"""
import numpy as np

__all__ = ["stream_rng"]


def stream_rng(seed, stream=0):
    """Return a counter-based generator for ``(seed, stream)``.

    Distinct streams are derived through ``SeedSequence`` spawn keys, which
    gives statistically independent Philox keys.
    """
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))
