"""Pure numpy implementations of the hot-path kernels.

Shared data layout: a batch of sampled delay-line states is a
``(n_events, n_words)`` uint64 array. Bit ``i`` of a row (little-endian
across words) is sampler ``i``'s captured value after edge-polarity
correction; the bit at index ``n_taps`` flags which half of the
measurement period the edge arrived in.
"""

from __future__ import annotations

import numpy as np

# Keep per-chunk temporaries around 16 MB so large batches stream through
# the cache instead of allocating event-count x tap-count boolean planes.
_CHUNK_BYTES = 1 << 24


def n_words(n_taps: int) -> int:
    return (n_taps + 64) // 64


def pack_states(
    thresholds: np.ndarray,
    phases: np.ndarray,
    half_period: int,
    n_taps: int,
) -> np.ndarray:
    """Sample the delay line for each arrival phase and pack bits into words.

    ``thresholds[i]`` is the folded phase at and above which sampler ``i``
    reads 1; it already accounts for per-sampler skew.
    """
    thresholds = np.ascontiguousarray(thresholds, dtype=np.int64)
    phases = np.ascontiguousarray(phases, dtype=np.int64)
    n = phases.shape[0]
    width = n_words(n_taps)
    out = np.empty((n, width), dtype=np.uint64)
    bit_cols = width * 64
    chunk = max(1, _CHUNK_BYTES // max(bit_cols, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        ph = phases[lo:hi]
        polarity = ph >= half_period
        folded = ph - polarity * half_period
        plane = np.zeros((hi - lo, bit_cols), dtype=bool)
        np.greater_equal(folded[:, None], thresholds[None, :], out=plane[:, :n_taps])
        plane[:, n_taps] = polarity
        packed = np.packbits(plane, axis=1, bitorder="little")
        out[lo:hi] = packed.view("<u8")
    return out


def seq_values(words: np.ndarray, n_taps: int) -> np.ndarray:
    """Rank of each packed state: set taps, offset by the half-period flag."""
    counts = np.bitwise_count(words).sum(axis=1).astype(np.int64)
    pol_word, pol_bit = divmod(n_taps, 64)
    polarity = ((words[:, pol_word] >> np.uint64(pol_bit)) & np.uint64(1)).astype(
        np.int64
    )
    # The flag bit itself was counted once; replace it with its rank offset.
    return counts - polarity + polarity * n_taps


def lookup_groups(
    words: np.ndarray,
    table_words: np.ndarray,
    table_groups: np.ndarray,
) -> np.ndarray:
    """Map each packed state to its group index, -1 where not in the table.

    ``table_words`` rows must be unique; ``table_groups`` is the parallel
    group index column.
    """
    if words.shape[0] == 0:
        return np.empty(0, dtype=np.int32)
    dtype = np.dtype([(f"w{k}", "<u8") for k in range(words.shape[1])])
    rows = np.ascontiguousarray(words).view(dtype)[:, 0]
    table_rows = np.ascontiguousarray(table_words).view(dtype)[:, 0]
    uniq, inverse = np.unique(rows, return_inverse=True)
    mapping = {row.tobytes(): int(g) for row, g in zip(table_rows, table_groups)}
    uniq_groups = np.fromiter(
        (mapping.get(u.tobytes(), -1) for u in uniq), dtype=np.int32, count=len(uniq)
    )
    return uniq_groups[inverse]


def fill_bins(bins: np.ndarray, indices: np.ndarray) -> int:
    """Increment 16-bit histogram bins, saturating at the counter maximum.

    Returns the number of increments dropped because the target bin was
    already full. ``indices`` must already be range-checked.
    """
    if bins.dtype != np.uint16:
        raise TypeError("histogram bins must be uint16")
    counts = np.bincount(indices, minlength=bins.shape[0]).astype(np.uint32)
    headroom = np.iinfo(np.uint16).max - bins.astype(np.uint32)
    applied = np.minimum(counts, headroom)
    bins += applied.astype(np.uint16)
    return int((counts - applied).sum())
