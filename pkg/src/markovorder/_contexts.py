"""Context-window codes shared by the counting and likelihood machinery.

A length-r window is encoded as a base-m integer whose least significant
digit is the most recent symbol, so sliding one step is
``code -> (code % m**(r-1)) * m + next_symbol``.
"""

from __future__ import annotations

import numpy as np


def context_codes(symbols: np.ndarray, r: int, m: int) -> np.ndarray:
    """Codes of the r-symbol windows preceding positions r..n-1 (0-based).

    Entry ``t`` encodes ``symbols[t:t+r]`` and is the context of the next
    symbol ``symbols[t+r]``; the result has length ``n - r`` (length ``n``
    for r = 0, where every position has the empty context).
    """
    x = np.asarray(symbols, dtype=np.int64)
    n = x.shape[0]
    if r == 0:
        return np.zeros(n, dtype=np.int64)
    if r > n:
        return np.zeros(0, dtype=np.int64)
    codes = np.zeros(n - r, dtype=np.int64)
    weight = 1
    for j in range(1, r + 1):
        codes += x[r - j : n - j] * weight
        weight *= m
    return codes


def block_digits(code, r: int, m: int) -> np.ndarray:
    """Symbols a_1..a_r of the block encoded by ``code`` (a_r least significant)."""
    c = np.asarray(code, dtype=np.int64)
    out = np.empty(c.shape + (r,), dtype=np.int64)
    for j in range(r):
        out[..., r - 1 - j] = (c // m**j) % m
    return out
