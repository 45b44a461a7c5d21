# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled kernels for state packing, table lookup, and histogram fill."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    """
    #if defined(_MSC_VER)
    #include <intrin.h>
    static inline unsigned long long tdltdc_popcount(unsigned long long x)
    { return __popcnt64(x); }
    #else
    static inline unsigned long long tdltdc_popcount(unsigned long long x)
    { return __builtin_popcountll(x); }
    #endif
    """
    unsigned long long tdltdc_popcount(unsigned long long x) nogil


def pack_states(thresholds, phases, half_period, n_taps):
    cdef cnp.int64_t[::1] th = np.ascontiguousarray(thresholds, dtype=np.int64)
    cdef cnp.int64_t[::1] ph = np.ascontiguousarray(phases, dtype=np.int64)
    cdef long long half = half_period
    cdef int taps = n_taps
    cdef Py_ssize_t n = ph.shape[0]
    cdef int width = (taps + 64) // 64
    out = np.zeros((n, width), dtype=np.uint64)
    cdef cnp.uint64_t[:, ::1] words = out
    cdef Py_ssize_t e
    cdef int i
    cdef long long folded
    with nogil:
        for e in range(n):
            folded = ph[e]
            if folded >= half:
                folded -= half
                words[e, taps >> 6] |= (<cnp.uint64_t>1) << (taps & 63)
            for i in range(taps):
                if th[i] <= folded:
                    words[e, i >> 6] |= (<cnp.uint64_t>1) << (i & 63)
    return out


def seq_values(words, n_taps):
    cdef cnp.uint64_t[:, ::1] w = np.ascontiguousarray(words, dtype=np.uint64)
    cdef int taps = n_taps
    cdef Py_ssize_t n = w.shape[0]
    cdef int width = w.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] seq = out
    cdef Py_ssize_t e
    cdef int k
    cdef long long total, polarity
    with nogil:
        for e in range(n):
            total = 0
            for k in range(width):
                total += <long long>tdltdc_popcount(w[e, k])
            polarity = (w[e, taps >> 6] >> (taps & 63)) & 1
            seq[e] = total - polarity + polarity * taps
    return out


cdef inline int _cmp_rows(const cnp.uint64_t *a, const cnp.uint64_t *b,
                          int width) nogil:
    cdef int k
    for k in range(width - 1, -1, -1):
        if a[k] < b[k]:
            return -1
        if a[k] > b[k]:
            return 1
    return 0


def lookup_groups(words, table_words, table_groups):
    cdef cnp.uint64_t[:, ::1] w = np.ascontiguousarray(words, dtype=np.uint64)
    cdef cnp.uint64_t[:, ::1] table = np.ascontiguousarray(
        table_words, dtype=np.uint64
    )
    cdef cnp.int32_t[::1] groups = np.ascontiguousarray(
        table_groups, dtype=np.int32
    )
    if table.shape[0] != groups.shape[0]:
        raise ValueError("table rows and group column differ in length")
    if w.shape[0] and w.shape[1] != table.shape[1]:
        raise ValueError("word width mismatch between batch and table")
    cdef Py_ssize_t n = w.shape[0]
    cdef int width = table.shape[1]
    cdef Py_ssize_t size = table.shape[0]
    out = np.empty(n, dtype=np.int32)
    cdef cnp.int32_t[::1] res = out
    cdef Py_ssize_t e, lo, hi, mid
    cdef int cmp
    with nogil:
        for e in range(n):
            lo = 0
            hi = size
            res[e] = -1
            while lo < hi:
                mid = (lo + hi) >> 1
                cmp = _cmp_rows(&table[mid, 0], &w[e, 0], width)
                if cmp == 0:
                    res[e] = groups[mid]
                    break
                elif cmp < 0:
                    lo = mid + 1
                else:
                    hi = mid
    return out


def fill_bins(bins, indices):
    if bins.dtype != np.uint16:
        raise TypeError("histogram bins must be uint16")
    cdef cnp.uint16_t[::1] b = bins
    cdef cnp.int64_t[::1] idx = np.ascontiguousarray(indices, dtype=np.int64)
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t e
    cdef long long lost = 0
    with nogil:
        for e in range(n):
            if b[idx[e]] == 65535:
                lost += 1
            else:
                b[idx[e]] += 1
    return lost
