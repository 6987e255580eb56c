"""Hot inner loops, compiled with numba when available.

Every kernel exists twice: a ``@njit`` version and a pure-numpy version with
identical outputs. The compiled path is used unless ``DIPSEQ_DISABLE_NUMBA``
is set to a truthy value (or numba cannot be imported). Random numbers are
always drawn by the caller from a numpy ``Generator`` and passed in, so the
integer kernels (BPE, allele sampling) are bit-identical across paths. The
embedding-gradient scatter agrees to rounding (summation order differs).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("DIPSEQ_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = numba is not None and not _DISABLED


# --------------------------------------------------------------------------
# pure numpy implementations
# --------------------------------------------------------------------------


def merge_pair_numpy(ids, left, right, new):
    """Replace non-overlapping ``(left, right)`` occurrences, scanning left to right."""
    n = ids.shape[0]
    if n < 2:
        return ids.copy()
    hits = np.flatnonzero((ids[:-1] == left) & (ids[1:] == right))
    if hits.size == 0:
        return ids.copy()
    if left == right:
        # runs like "AAA" overlap; keep the greedy left-most choice
        keep = []
        last = -2
        for h in hits.tolist():
            if h > last + 1:
                keep.append(h)
                last = h
        hits = np.asarray(keep, dtype=np.int64)
    out = ids.copy()
    out[hits] = new
    drop = np.ones(n, dtype=bool)
    drop[hits + 1] = False
    return out[drop]


def count_pairs_numpy(ids, vocab_size):
    """Adjacent pair counts, skipping negative separators.

    Returns ``(keys, counts)`` with ``key = left * vocab_size + right`` sorted ascending.
    """
    if ids.shape[0] < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    a = ids[:-1]
    b = ids[1:]
    ok = (a >= 0) & (b >= 0)
    keys = a[ok].astype(np.int64) * vocab_size + b[ok]
    uniq, counts = np.unique(keys, return_counts=True)
    return uniq.astype(np.int64), counts.astype(np.int64)


def sample_pairs_numpy(cum, column_of, ref_allele, uniforms, pair_codepoint):
    """Draw one allele pair per position by inverse CDF.

    ``cum`` holds cumulative weights of the explicit columns, ``column_of[i]``
    indexes into it (``-1`` = implicit reference column whose allele is
    ``ref_allele[i]``). Returns the code point of each drawn SNP token.
    """
    n = column_of.shape[0]
    first = ref_allele.astype(np.int64).copy()
    second = first.copy()
    explicit = column_of >= 0
    if explicit.any():
        rows = cum[column_of[explicit]]
        total = rows[:, -1:]
        x1 = uniforms[explicit, 0:1] * total
        x2 = uniforms[explicit, 1:2] * total
        k = rows.shape[1]
        first[explicit] = np.minimum((rows <= x1).sum(axis=1), k - 1)
        second[explicit] = np.minimum((rows <= x2).sum(axis=1), k - 1)
    out = pair_codepoint[first, second]
    return out.astype(np.int32) if n else np.zeros(0, np.int32)


def scatter_add_rows_numpy(target, index, rows):
    """``target[index[i]] += rows[i]`` with repeated indices accumulated (in place)."""
    np.add.at(target, index, rows)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if numba is not None:

    @numba.njit(cache=True, nogil=True)
    def merge_pair_numba(ids, left, right, new):
        n = ids.shape[0]
        out = np.empty(n, dtype=ids.dtype)
        i = 0
        j = 0
        while i < n:
            if i + 1 < n and ids[i] == left and ids[i + 1] == right:
                out[j] = new
                i += 2
            else:
                out[j] = ids[i]
                i += 1
            j += 1
        return out[:j].copy()

    @numba.njit(cache=True, nogil=True)
    def count_pairs_numba(ids, vocab_size):
        n = ids.shape[0]
        if n < 2:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        space = np.int64(vocab_size) * vocab_size
        if space <= max(4 * n, 1 << 20):
            # small key space: dense histogram beats sorting
            dense = np.zeros(space, dtype=np.int64)
            for i in range(n - 1):
                a = ids[i]
                b = ids[i + 1]
                if a >= 0 and b >= 0:
                    dense[np.int64(a) * vocab_size + b] += 1
            m = 0
            for key in range(space):
                if dense[key]:
                    m += 1
            uniq = np.empty(m, dtype=np.int64)
            counts = np.empty(m, dtype=np.int64)
            m = 0
            for key in range(space):
                if dense[key]:
                    uniq[m] = key
                    counts[m] = dense[key]
                    m += 1
            return uniq, counts
        keys = np.empty(n - 1, dtype=np.int64)
        m = 0
        for i in range(n - 1):
            a = ids[i]
            b = ids[i + 1]
            if a >= 0 and b >= 0:
                keys[m] = np.int64(a) * vocab_size + b
                m += 1
        keys = np.sort(keys[:m])
        uniq = np.empty(m, dtype=np.int64)
        counts = np.empty(m, dtype=np.int64)
        u = -1
        for i in range(m):
            if u < 0 or keys[i] != uniq[u]:
                u += 1
                uniq[u] = keys[i]
                counts[u] = 1
            else:
                counts[u] += 1
        return uniq[: u + 1].copy(), counts[: u + 1].copy()

    @numba.njit(cache=True, nogil=True)
    def sample_pairs_numba(cum, column_of, ref_allele, uniforms, pair_codepoint):
        n = column_of.shape[0]
        k = cum.shape[1]
        out = np.empty(n, dtype=np.int32)
        for i in range(n):
            c = column_of[i]
            if c < 0:
                r = ref_allele[i]
                out[i] = pair_codepoint[r, r]
                continue
            total = cum[c, k - 1]
            picks = np.empty(2, dtype=np.int64)
            for d in range(2):
                x = uniforms[i, d] * total
                j = 0
                while j < k - 1 and cum[c, j] <= x:
                    j += 1
                picks[d] = j
            out[i] = pair_codepoint[picks[0], picks[1]]
        return out

    @numba.njit(cache=True, nogil=True)
    def scatter_add_rows_numba(target, index, rows):
        d = target.shape[1]
        for i in range(index.shape[0]):
            r = index[i]
            for j in range(d):
                target[r, j] += rows[i, j]

else:  # pragma: no cover
    merge_pair_numba = count_pairs_numba = sample_pairs_numba = None
    scatter_add_rows_numba = None


if USE_NUMBA:
    merge_pair = merge_pair_numba
    count_pairs = count_pairs_numba
    sample_pairs = sample_pairs_numba
    scatter_add_rows = scatter_add_rows_numba
else:
    merge_pair = merge_pair_numpy
    count_pairs = count_pairs_numpy
    sample_pairs = sample_pairs_numpy
    scatter_add_rows = scatter_add_rows_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
