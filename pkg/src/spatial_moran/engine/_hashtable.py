"""Open-addressing int64 -> int64 hash map for compiled kernels.

Linear probing with backward-shift deletion, so no tombstones accumulate over
long runs.  Keys must be non-negative; ``EMPTY`` marks a free bucket.  The
table size is a power of two and callers keep the load factor <= 1/2.
"""

import numpy as np
from numba import njit

EMPTY = -1


@njit(inline="always")
def _bucket(key, mask):
    # Fibonacci hashing: the high bits of key * 2^64/phi
    return np.int64((np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)) >> np.uint64(32)) & mask


@njit(cache=True)
def ht_new(size):
    return np.full(size, EMPTY, np.int64), np.empty(size, np.int64)


@njit(inline="always")
def ht_find(hk, key):
    """Bucket index holding ``key``, or -1."""
    mask = hk.size - 1
    i = _bucket(key, mask)
    while True:
        k = hk[i]
        if k == key:
            return i
        if k == EMPTY:
            return -1
        i = (i + 1) & mask


@njit(inline="always")
def ht_insert(hk, hv, key, val):
    mask = hk.size - 1
    i = _bucket(key, mask)
    while hk[i] != EMPTY:
        i = (i + 1) & mask
    hk[i] = key
    hv[i] = val


@njit(inline="always")
def ht_delete_at(hk, hv, i):
    mask = hk.size - 1
    j = i
    while True:
        j = (j + 1) & mask
        if hk[j] == EMPTY:
            break
        home = _bucket(hk[j], mask)
        # entry at j may move to the hole at i unless its home lies in (i, j]
        if i <= j:
            movable = home <= i or home > j
        else:
            movable = home <= i and home > j
        if movable:
            hk[i] = hk[j]
            hv[i] = hv[j]
            i = j
    hk[i] = EMPTY


@njit(cache=True)
def ht_resized(hk, hv, size):
    nk, nv = ht_new(size)
    for i in range(hk.size):
        if hk[i] != EMPTY:
            ht_insert(nk, nv, hk[i], hv[i])
    return nk, nv
