"""Exact context and transition counts for every depth up to a cap.

For depth r the table counts, over window end positions i = r+1..n, how
often each length-r context precedes each next symbol.  Context counts are
the row sums of the transition table (every counted window has a next
symbol inside the path), so only transition tables are stored.

Tables are dense arrays of shape (m**r, m) while m**(r+1) stays at or
below ``DENSE_LIMIT`` and dicts of per-context rows above; the cutoff
functions keep depths logarithmic, so the dense branch is the norm.
"""

from __future__ import annotations

import struct

import numpy as np

from ._contexts import context_codes

DENSE_LIMIT = 1 << 20

_MAGIC = b"MKOC"
_VERSION = 1


class ContextCounts:
    """Counts for all depths 0..depth_cap over a growing path."""

    def __init__(self, m: int, depth_cap: int, n: int, tables, tail: np.ndarray):
        self.m = int(m)
        self.depth_cap = int(depth_cap)
        self.n = int(n)
        self._tables = tables  # per depth: ndarray (m**r, m) or {ctx: ndarray (m,)}
        self._tail = np.asarray(tail, dtype=np.int64)

    def is_dense(self, r: int) -> bool:
        return isinstance(self._tables[r], np.ndarray)

    def transition_counts(self, r: int):
        """Transition table at depth r: ndarray (m**r, m), or a dict of rows."""
        self._check_depth(r)
        return self._tables[r]

    def context_counts(self, r: int):
        """Context counts at depth r: ndarray (m**r,), or a dict of ints."""
        self._check_depth(r)
        table = self._tables[r]
        if isinstance(table, np.ndarray):
            return table.sum(axis=1)
        return {ctx: int(row.sum()) for ctx, row in table.items()}

    def _check_depth(self, r: int):
        if not 0 <= r <= self.depth_cap:
            raise ValueError(f"depth {r} outside tracked range 0..{self.depth_cap}")

    def copy(self) -> "ContextCounts":
        tables = [
            t.copy() if isinstance(t, np.ndarray) else {c: row.copy() for c, row in t.items()}
            for t in self._tables
        ]
        return ContextCounts(self.m, self.depth_cap, self.n, tables, self._tail.copy())

    # -- binary checkpoint format (little-endian, layout in the README) ----

    def dump(self, path) -> None:
        """Write a versioned little-endian binary checkpoint."""
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<HHIIQ", _VERSION, 0, self.m, self.depth_cap, self.n))
            tail = self._tail.astype("<u4")
            fh.write(struct.pack("<I", tail.shape[0]))
            fh.write(tail.tobytes())
            for r in range(self.depth_cap + 1):
                table = self._tables[r]
                if isinstance(table, np.ndarray):
                    fh.write(struct.pack("<B", 0))
                    fh.write(table.astype("<u8").tobytes())
                else:
                    fh.write(struct.pack("<BQ", 1, len(table)))
                    for ctx in sorted(table):
                        fh.write(struct.pack("<Q", ctx))
                        fh.write(table[ctx].astype("<u8").tobytes())

    @classmethod
    def load(cls, path) -> "ContextCounts":
        with open(path, "rb") as fh:
            if fh.read(4) != _MAGIC:
                raise ValueError("not a counts checkpoint file")
            version, _, m, depth_cap, n = struct.unpack("<HHIIQ", fh.read(20))
            if version != _VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            (tail_len,) = struct.unpack("<I", fh.read(4))
            tail = np.frombuffer(fh.read(4 * tail_len), dtype="<u4").astype(np.int64)
            tables = []
            for r in range(depth_cap + 1):
                (kind,) = struct.unpack("<B", fh.read(1))
                if kind == 0:
                    raw = fh.read(8 * m ** (r + 1))
                    tables.append(
                        np.frombuffer(raw, dtype="<u8").astype(np.int64).reshape(m**r, m)
                    )
                else:
                    (entries,) = struct.unpack("<Q", fh.read(8))
                    table = {}
                    for _ in range(entries):
                        (ctx,) = struct.unpack("<Q", fh.read(8))
                        row = np.frombuffer(fh.read(8 * m), dtype="<u8").astype(np.int64)
                        table[int(ctx)] = row
                    tables.append(table)
        return cls(m, depth_cap, n, tables, tail)


def _empty_table(m: int, r: int):
    if m ** (r + 1) <= DENSE_LIMIT:
        return np.zeros((m**r, m), dtype=np.int64)
    return {}


def _add_windows(table, ctx_codes: np.ndarray, next_syms: np.ndarray, m: int):
    if isinstance(table, np.ndarray):
        flat = ctx_codes * m + next_syms
        table.ravel()[:] += np.bincount(flat, minlength=table.size)
    else:
        flat = ctx_codes * m + next_syms
        uniq, cnt = np.unique(flat, return_counts=True)
        for f, c in zip(uniq.tolist(), cnt.tolist()):
            ctx, b = divmod(f, m)
            row = table.get(ctx)
            if row is None:
                row = np.zeros(m, dtype=np.int64)
                table[ctx] = row
            row[b] += c


def build_counts(path, depth_cap: int, m: int | None = None) -> ContextCounts:
    """Count all windows of every depth 0..depth_cap over the path.

    ``path`` may be a PathSample or a plain symbol array (then ``m`` is
    required).  Requires depth_cap < n so that even the deepest table has
    at least one window.
    """
    symbols = np.asarray(getattr(path, "symbols", path), dtype=np.int64)
    if m is None:
        m = getattr(path, "m", 0)
    if not m or m < 2:
        raise ValueError("alphabet size m must be given (>= 2)")
    n = symbols.shape[0]
    if depth_cap >= n:
        raise ValueError(f"depth cap {depth_cap} must be < path length {n}")
    if symbols.size and (symbols.min() < 0 or symbols.max() >= m):
        raise ValueError("path contains a symbol outside the alphabet")
    tables = []
    for r in range(depth_cap + 1):
        table = _empty_table(m, r)
        _add_windows(table, context_codes(symbols, r, m), symbols[r:], m)
        tables.append(table)
    tail = symbols[n - depth_cap :] if depth_cap > 0 else symbols[:0]
    return ContextCounts(m, depth_cap, n, tables, tail)


def extend_counts(counts: ContextCounts, new_symbols) -> ContextCounts:
    """Counts for the concatenated path; the input is left untouched.

    Equivalent to rebuilding from scratch on the full path: only windows
    whose end position lands in the new segment are added, reaching back
    into the retained tail for their contexts.
    """
    new = np.asarray(getattr(new_symbols, "symbols", new_symbols), dtype=np.int64)
    if new.size == 0:
        return counts.copy()
    if new.min() < 0 or new.max() >= counts.m:
        raise ValueError("extension contains a symbol outside the alphabet")
    out = counts.copy()
    m, cap, n_old = counts.m, counts.depth_cap, counts.n
    tail = out._tail
    spliced = np.concatenate([tail, new])
    t = tail.shape[0]
    k = new.shape[0]
    for r in range(cap + 1):
        # window end positions (0-based next-symbol index in `spliced`):
        # all of t..t+k-1, except ends whose context would start before the path
        start = max(r, t) if n_old < r else t
        if start >= t + k:
            continue
        codes = context_codes(spliced[start - r :], r, m)
        nxt = spliced[start:]
        _add_windows(out._tables[r], codes[: t + k - start], nxt, m)
    out.n = n_old + k
    out._tail = spliced[max(0, spliced.shape[0] - cap) :] if cap > 0 else spliced[:0]
    return out
