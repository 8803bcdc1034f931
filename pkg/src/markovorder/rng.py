"""Deterministic counter-based random numbers.

Everything random in this package flows through a single splitmix64-style
counter generator: the value at stream position ``k`` for a given 64-bit
seed is obtained by applying the splitmix64 finalizer to
``seed + (k + 1) * PHI64`` (all arithmetic mod 2**64).  Because positions
are addressed directly, any block of the stream can be generated in one
vectorized call and batch simulation over many seeds produces bit-identical
values to one-at-a-time generation.

Replication seeds are derived as ``master XOR scramble(i)`` where
``scramble`` is the same finalizer applied to ``(i + 1) * PHI64``, so
parallel replications never share a stream.

References: Steele, Lea & Flood, "Fast splittable pseudorandom number
generators" (OOPSLA 2013); Vigna's public-domain splitmix64.c.
"""

from __future__ import annotations

import numpy as np

PHI64 = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_MASK = 0xFFFFFFFFFFFFFFFF

# 53-bit mantissa: (z >> 11) * 2**-53 is uniform on [0, 1).
_TO_UNIT = 2.0 ** -53


def _finalize(z: np.ndarray) -> np.ndarray:
    # splitmix64 output function; z must be a uint64 ndarray (wraps silently)
    z = z ^ (z >> np.uint64(30))
    z = z * np.uint64(_MUL1)
    z = z ^ (z >> np.uint64(27))
    z = z * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def _as_u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == np.uint64:
        return arr
    # go through Python ints so values in [2**63, 2**64) convert exactly
    return np.asarray(values, dtype=np.uint64)


def raw_at(seed: int, positions) -> np.ndarray:
    """64-bit outputs of the stream ``seed`` at the given positions."""
    pos = _as_u64(positions)
    counter = (pos + np.uint64(1)) * np.uint64(PHI64)
    return _finalize(counter + np.uint64(seed & _MASK))


def uniform_block(seed: int, start: int, count: int) -> np.ndarray:
    """``count`` uniforms on [0, 1) at stream positions start..start+count-1."""
    pos = np.arange(start, start + count, dtype=np.uint64)
    z = raw_at(seed, pos)
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def uniforms_at(seeds, position: int) -> np.ndarray:
    """One uniform per seed, all at the same stream position.

    Used by batched simulation: lane ``i`` of the result equals
    ``uniform_block(seeds[i], position, 1)[0]`` exactly.
    """
    s = _as_u64(seeds)
    counter = np.uint64((int(position) + 1) * PHI64 & _MASK)
    z = _finalize(s + counter)
    return (z >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def scramble(index: int) -> int:
    """splitmix64 finalizer of ``(index + 1) * PHI64``, as a Python int."""
    z = _finalize(_as_u64([((index + 1) * PHI64) & _MASK]))
    return int(z[0])


def derive_seed(master: int, index: int) -> int:
    """Seed for replication ``index``: ``master XOR scramble(index)``."""
    return (master & _MASK) ^ scramble(index)
