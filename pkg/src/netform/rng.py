"""Named, counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from the master seed plus a tuple of names (module, village id,
replicate, ...) and whose counter encodes the position in the run (MCMC
iteration, phase).  A stream is therefore a pure function of its coordinates,
which makes results independent of execution order and worker count, and lets
an interrupted chain resume without saving generator state.
"""

from __future__ import annotations

import zlib
from functools import lru_cache

import numpy as np

__all__ = ["stream_key", "stream"]

_MASK64 = (1 << 64) - 1


def _as_word(token) -> int:
    if isinstance(token, (bool, np.bool_)):
        return int(token)
    if isinstance(token, (int, np.integer)):
        value = int(token)
        if value < 0:
            raise ValueError(f"stream coordinates must be non-negative, got {value}")
        return value
    if isinstance(token, str):
        # offset keeps string names apart from integer ids below 2**32
        return (1 << 32) + zlib.crc32(token.encode("utf-8"))
    raise TypeError(f"unsupported stream coordinate {token!r}")


@lru_cache(maxsize=65536)
def _key(seed: int, names: tuple) -> tuple[int, int]:
    entropy = [_as_word(seed)] + [_as_word(t) for t in names]
    words = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return int(words[0]), int(words[1])


def stream_key(seed: int, *names) -> np.ndarray:
    """128-bit Philox key for the stream named ``names`` under ``seed``."""
    return np.array(_key(int(seed), tuple(names)), dtype=np.uint64)


def stream(seed: int, *names, counter: tuple[int, int] = (0, 0)) -> np.random.Generator:
    """Generator for ``(seed, *names)`` positioned at ``counter``.

    ``counter`` occupies the two high words of the Philox counter; the low
    words advance as numbers are drawn, so distinct counters never overlap
    unless a single call draws more than 2**64 blocks.
    """
    hi, top = (int(c) & _MASK64 for c in counter)
    bitgen = np.random.Philox(key=stream_key(seed, *names), counter=[0, 0, hi, top])
    return np.random.Generator(bitgen)
