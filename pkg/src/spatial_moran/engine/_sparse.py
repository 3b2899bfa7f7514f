"""Compiled single-family kernels on the unbounded lattice Z^d.

Only type-1 sites are materialised.  Each type-1 site owns a slot; the slot
records its packed key and, for each of the 2d directions, the position of
the ordered discordant pair (slot, direction) in the pair list, or -1 when
the neighbour in that direction is also type 1.  Type-0 neighbours are never
stored: a site is type 1 iff its key is in the hash map.

Hot helpers take the arrays one by one rather than the ``SparseState``
tuple: every attribute access on a tuple of arrays costs a refcount round
trip in compiled code, which dominated the event cost.
"""

from collections import namedtuple

import numpy as np
from numba import njit

from ._codes import (
    BITS, EV_ABSORBED, EV_DOWN, EV_MUT12, EV_NOOP, EV_OVERFLOW, EV_UP,
    FATE_EVENT_BUDGET, FATE_EXTINCT, FATE_MANHOUR_CAP, FATE_OVERFLOW,
    FATE_SIZE_CAP, FATE_TYPE2, FST_SIZE, IST_SIZE, MANHOURS, N1, NB, NDOWN,
    NEV, NFREE, NSLOT, NUP, SITE, TIME,
)
from ._hashtable import EMPTY, ht_delete_at, ht_find, ht_insert, ht_new, ht_resized

SparseState = namedtuple(
    "SparseState", ["hk", "hv", "skey", "spp", "free", "pslot", "pdir", "ist", "fst", "strides"]
)


@njit(cache=True)
def sparse_new(d, bits, cap):
    hk, hv = ht_new(max(16, 2 * cap))
    skey = np.full(cap, -1, np.int64)
    spp = np.full((cap, 2 * d), -1, np.int64)
    free = np.empty(cap, np.int64)
    pslot = np.empty(2 * d * cap, np.int64)
    pdir = np.empty(2 * d * cap, np.int64)
    ist = np.zeros(IST_SIZE, np.int64)
    ist[BITS] = bits
    fst = np.zeros(FST_SIZE, np.float64)
    strides = np.empty(d, np.int64)
    for i in range(d):
        strides[i] = np.int64(1) << np.int64(bits * (d - 1 - i))
    return SparseState(hk, hv, skey, spp, free, pslot, pdir, ist, fst, strides)


@njit(inline="always")
def _needs_growth(hk, skey, spp, pslot, ist):
    return (
        2 * (ist[N1] + 1) > hk.size
        or (ist[NFREE] == 0 and ist[NSLOT] == skey.size)
        or ist[NB] + spp.shape[1] > pslot.size
    )


@njit(cache=True)
def sparse_ensure(st):
    """Grow storage so that one more flip cannot overflow any array."""
    hk, hv, skey, spp, free, pslot, pdir = st.hk, st.hv, st.skey, st.spp, st.free, st.pslot, st.pdir
    ist = st.ist
    if not _needs_growth(hk, skey, spp, pslot, ist):
        return st
    twod = spp.shape[1]
    if 2 * (ist[N1] + 1) > hk.size:
        hk, hv = ht_resized(hk, hv, 2 * hk.size)
    if ist[NFREE] == 0 and ist[NSLOT] == skey.size:
        cap = 2 * skey.size
        nk = np.full(cap, -1, np.int64)
        nk[: skey.size] = skey
        npp = np.full((cap, twod), -1, np.int64)
        npp[: skey.size] = spp
        skey, spp = nk, npp
        free = np.empty(cap, np.int64)  # free list is empty here
    if ist[NB] + twod > pslot.size:
        cap = 2 * pslot.size
        a = np.empty(cap, np.int64)
        a[: pslot.size] = pslot
        b = np.empty(cap, np.int64)
        b[: pdir.size] = pdir
        pslot, pdir = a, b
    return SparseState(hk, hv, skey, spp, free, pslot, pdir, ist, st.fst, st.strides)


@njit(inline="always")
def _nbr(strides, key, direction):
    s = strides[direction >> 1]
    return key + s if direction & 1 else key - s


@njit(inline="always")
def _in_range(strides, bits, key):
    # every neighbour of key must itself stay packable
    mask = (np.int64(1) << bits) - 1
    d = strides.size
    for i in range(d):
        p = (key >> (bits * (d - 1 - i))) & mask
        if p < 2 or p > mask - 1:
            return False
    return True


@njit(inline="always")
def _add_pair(spp, pslot, pdir, ist, slot, direction):
    b = ist[NB]
    pslot[b] = slot
    pdir[b] = direction
    spp[slot, direction] = b
    ist[NB] = b + 1


@njit(inline="always")
def _remove_pair(spp, pslot, pdir, ist, slot, direction):
    p = spp[slot, direction]
    last = ist[NB] - 1
    if p != last:
        s2 = pslot[last]
        d2 = pdir[last]
        pslot[p] = s2
        pdir[p] = d2
        spp[s2, d2] = p
    spp[slot, direction] = -1
    ist[NB] = last


@njit(inline="always")
def _flip_up(hk, hv, skey, spp, free, pslot, pdir, ist, strides, y):
    if not _in_range(strides, ist[BITS], y):
        return EV_OVERFLOW
    if ist[NFREE] > 0:
        ist[NFREE] -= 1
        t = free[ist[NFREE]]
    else:
        t = ist[NSLOT]
        ist[NSLOT] += 1
    skey[t] = y
    ht_insert(hk, hv, y, t)
    for dr in range(spp.shape[1]):
        h = ht_find(hk, _nbr(strides, y, dr))
        if h >= 0:
            _remove_pair(spp, pslot, pdir, ist, hv[h], dr ^ 1)
            spp[t, dr] = -1
        else:
            _add_pair(spp, pslot, pdir, ist, t, dr)
    ist[N1] += 1
    return EV_UP


@njit(inline="always")
def _flip_down(hk, hv, skey, spp, free, pslot, pdir, ist, strides, slot):
    x = skey[slot]
    for dr in range(spp.shape[1]):
        h = ht_find(hk, _nbr(strides, x, dr))
        if h >= 0:
            _add_pair(spp, pslot, pdir, ist, hv[h], dr ^ 1)
        else:
            _remove_pair(spp, pslot, pdir, ist, slot, dr)
    ht_delete_at(hk, hv, ht_find(hk, x))
    skey[slot] = -1
    free[ist[NFREE]] = slot
    ist[NFREE] += 1
    ist[N1] -= 1
    return EV_DOWN


@njit(inline="always")
def _step(hk, hv, skey, spp, free, pslot, pdir, ist, fst, strides, lam, u2, komarova, rng):
    """One event of the continuous-time chain; caller guarantees capacity.

    Channels in order: flip-up, flip-down, mutate-12.  Under Komarova
    dynamics the two flip channels are replaced by a single resampling
    channel thinned from the discordant-pair list (proposal rate 2B).
    """
    n1 = ist[N1]
    nb = ist[NB]
    twod = spp.shape[1]
    if komarova:
        up_rate = 2.0 * nb
        flip_rate = up_rate
    else:
        up_rate = lam * nb / twod
        flip_rate = up_rate + nb / twod
    total = flip_rate + u2 * n1
    if total <= 0.0:
        return EV_ABSORBED
    dt = rng.exponential() / total
    fst[TIME] += dt
    fst[MANHOURS] += n1 * dt
    ist[NEV] += 1
    r = rng.random() * total
    if r < flip_rate:
        i = min(int(rng.random() * nb), nb - 1)
        sl = pslot[i]
        x = skey[sl]
        y = _nbr(strides, x, pdir[i])
        if not komarova:
            if r < up_rate:
                ist[SITE] = y
                code = _flip_up(hk, hv, skey, spp, free, pslot, pdir, ist, strides, y)
                if code == EV_UP:
                    ist[NUP] += 1
                return code
            ist[SITE] = x
            ist[NDOWN] += 1
            return _flip_down(hk, hv, skey, spp, free, pslot, pdir, ist, strides, sl)
        # Komarova: endpoint z of the pair, accepted with prob 1/disc(z)
        z_is_one = rng.random() < 0.5
        z = x if z_is_one else y
        n1z = 0
        for k in range(twod):
            if ht_find(hk, _nbr(strides, z, k)) >= 0:
                n1z += 1
        n0z = twod - n1z
        disc = n0z if z_is_one else n1z
        ist[SITE] = z
        if rng.random() * disc >= 1.0:
            return EV_NOOP
        becomes_one = rng.random() * (lam * n1z + n0z) < lam * n1z
        if z_is_one and not becomes_one:
            ist[NDOWN] += 1
            return _flip_down(hk, hv, skey, spp, free, pslot, pdir, ist, strides, sl)
        if (not z_is_one) and becomes_one:
            code = _flip_up(hk, hv, skey, spp, free, pslot, pdir, ist, strides, z)
            if code == EV_UP:
                ist[NUP] += 1
            return code
        return EV_NOOP
    # mutate-12 at a uniform type-1 site (rejection over the slot range)
    n = ist[NSLOT]
    while True:
        s = min(int(rng.random() * n), n - 1)
        if skey[s] >= 0:
            break
    ist[SITE] = skey[s]
    return EV_MUT12


@njit(cache=True)
def sparse_flip_up(st, y):
    """Make site ``y`` type 1 (capacity must be ensured).  EV_UP or EV_OVERFLOW."""
    return _flip_up(st.hk, st.hv, st.skey, st.spp, st.free, st.pslot, st.pdir, st.ist,
                    st.strides, y)


@njit(cache=True)
def sparse_clear(st):
    """Remove every type-1 site without touching time or counters."""
    ist = st.ist
    skey = st.skey
    spp = st.spp
    if ist[N1] > 0:
        for s in range(min(ist[NSLOT], skey.size)):
            if skey[s] >= 0:
                skey[s] = -1
                for dr in range(spp.shape[1]):
                    spp[s, dr] = -1
        st.hk[:] = EMPTY
    ist[N1] = 0
    ist[NB] = 0
    ist[NSLOT] = 0
    ist[NFREE] = 0


@njit(cache=True)
def sparse_reset_single(st, origin):
    sparse_clear(st)
    st.ist[NUP] = 0
    st.ist[NDOWN] = 0
    st.ist[NEV] = 0
    st.fst[TIME] = 0.0
    st.fst[MANHOURS] = 0.0
    return sparse_flip_up(st, origin)


@njit(cache=True)
def sparse_advance(st, lam, u2, komarova, rng):
    """Ensure capacity, then one event.  Returns the (possibly regrown) state."""
    st = sparse_ensure(st)
    code = _step(st.hk, st.hv, st.skey, st.spp, st.free, st.pslot, st.pdir, st.ist, st.fst,
                 st.strides, lam, u2, komarova, rng)
    return st, code


@njit(cache=True)
def _grow_pairs(pslot, pdir, need):
    cap = pslot.size
    while cap < need:
        cap *= 2
    a = np.empty(cap, np.int64)
    a[: pslot.size] = pslot
    b = np.empty(cap, np.int64)
    b[: pdir.size] = pdir
    return a, b


@njit(cache=True)
def _grow_slots(skey, spp):
    cap = 2 * skey.size
    nk = np.full(cap, -1, np.int64)
    nk[: skey.size] = skey
    npp = np.full((cap, spp.shape[1]), -1, np.int64)
    npp[: skey.size] = spp
    return nk, npp, np.empty(cap, np.int64)


@njit(cache=True)
def run_family_batch(st, origin, nfam, lam, u2_channel, komarova, wcap, size_cap,
                     levels, clock_level, max_events, rng):
    """Run ``nfam`` independent families from a single type 1 at ``origin``.

    ``levels`` (ascending) are sizes whose first hitting time and boundary
    count are recorded.  Man-hours count from the first time the size
    reaches ``clock_level`` (1 = from the start); ``wcap`` caps that count.
    The returned state must replace ``st``: storage may have been regrown.

    Same chain as ``_step`` but with the scalar state held in locals, which
    roughly halves the cost per event.
    """
    nlev = levels.size
    fate = np.empty(nfam, np.int8)
    manhours = np.zeros(nfam)
    maxsize = np.empty(nfam, np.int64)
    tend = np.empty(nfam)
    nup = np.empty(nfam, np.int64)
    ndown = np.empty(nfam, np.int64)
    nev = np.empty(nfam, np.int64)
    reached = np.zeros(nfam, np.bool_)
    hit_t = np.full((nfam, nlev), np.nan)
    hit_b = np.full((nfam, nlev), -1, np.int64)
    ist = st.ist
    fst = st.fst
    strides = st.strides
    bits = ist[BITS]
    twod = st.spp.shape[1]
    for f in range(nfam):
        st = sparse_ensure(st)
        code = sparse_reset_single(st, origin)
        hk, hv, skey, spp, free, pslot, pdir = (
            st.hk, st.hv, st.skey, st.spp, st.free, st.pslot, st.pdir)
        n1 = ist[N1]
        nb = ist[NB]
        nslot = ist[NSLOT]
        nfree = ist[NFREE]
        t = 0.0
        w = 0.0
        ne = 0
        nu = 0
        nd = 0
        nxt = 0
        while nxt < nlev and levels[nxt] <= 1:
            if levels[nxt] == 1:
                hit_t[f, nxt] = 0.0
                hit_b[f, nxt] = nb
            nxt += 1
        w0 = 0.0
        clock = clock_level <= 1
        mx = 1
        result = FATE_EXTINCT
        if code == EV_OVERFLOW:
            result = FATE_OVERFLOW
            n1 = 0
        while n1 > 0:
            if n1 >= size_cap:
                result = FATE_SIZE_CAP
                break
            if clock and w - w0 >= wcap:
                result = FATE_MANHOUR_CAP
                break
            if ne >= max_events:
                result = FATE_EVENT_BUDGET
                break
            if komarova:
                up_rate = 2.0 * nb
                flip_rate = up_rate
            else:
                up_rate = lam * nb / twod
                flip_rate = up_rate + nb / twod
            total = flip_rate + u2_channel * n1
            dt = rng.exponential() / total
            t += dt
            w += n1 * dt
            ne += 1
            r = rng.random() * total
            if r >= flip_rate:
                result = FATE_TYPE2
                break
            i = min(int(rng.random() * nb), nb - 1)
            sl = pslot[i]
            x = skey[sl]
            dr = pdir[i]
            s = strides[dr >> 1]
            y = x + s if dr & 1 else x - s
            up = False
            down = False
            if not komarova:
                up = r < up_rate
                down = not up
            else:
                z_is_one = rng.random() < 0.5
                z = x if z_is_one else y
                n1z = 0
                for k in range(twod):
                    sk = strides[k >> 1]
                    if ht_find(hk, z + sk if k & 1 else z - sk) >= 0:
                        n1z += 1
                n0z = twod - n1z
                disc = n0z if z_is_one else n1z
                if rng.random() * disc < 1.0:
                    becomes_one = rng.random() * (lam * n1z + n0z) < lam * n1z
                    down = z_is_one and not becomes_one
                    up = (not z_is_one) and becomes_one
            if up:
                if not _in_range(strides, bits, y):
                    result = FATE_OVERFLOW
                    break
                if nfree > 0:
                    nfree -= 1
                    ts = free[nfree]
                else:
                    if nslot == skey.size:
                        skey, spp, free = _grow_slots(skey, spp)
                    ts = nslot
                    nslot += 1
                if 2 * (n1 + 1) > hk.size:
                    hk, hv = ht_resized(hk, hv, 2 * hk.size)
                if nb + twod > pslot.size:
                    pslot, pdir = _grow_pairs(pslot, pdir, nb + twod)
                skey[ts] = y
                ht_insert(hk, hv, y, ts)
                for dd in range(twod):
                    sd = strides[dd >> 1]
                    hi = ht_find(hk, y + sd if dd & 1 else y - sd)
                    if hi >= 0:
                        zs = hv[hi]
                        od = dd ^ 1
                        p = spp[zs, od]
                        nb -= 1
                        if p != nb:
                            ps = pslot[nb]
                            pd = pdir[nb]
                            pslot[p] = ps
                            pdir[p] = pd
                            spp[ps, pd] = p
                        spp[zs, od] = -1
                        spp[ts, dd] = -1
                    else:
                        spp[ts, dd] = nb
                        pslot[nb] = ts
                        pdir[nb] = dd
                        nb += 1
                n1 += 1
                nu += 1
                if n1 > mx:
                    mx = n1
                    if not clock and n1 >= clock_level:
                        clock = True
                        w0 = w
                    while nxt < nlev and levels[nxt] == n1:
                        hit_t[f, nxt] = t
                        hit_b[f, nxt] = nb
                        nxt += 1
            elif down:
                if nb + twod > pslot.size:
                    pslot, pdir = _grow_pairs(pslot, pdir, nb + twod)
                for dd in range(twod):
                    sd = strides[dd >> 1]
                    hi = ht_find(hk, x + sd if dd & 1 else x - sd)
                    if hi >= 0:
                        zs = hv[hi]
                        od = dd ^ 1
                        spp[zs, od] = nb
                        pslot[nb] = zs
                        pdir[nb] = od
                        nb += 1
                    else:
                        p = spp[sl, dd]
                        nb -= 1
                        if p != nb:
                            ps = pslot[nb]
                            pd = pdir[nb]
                            pslot[p] = ps
                            pdir[p] = pd
                            spp[ps, pd] = p
                        spp[sl, dd] = -1
                ht_delete_at(hk, hv, ht_find(hk, x))
                skey[sl] = -1
                free[nfree] = sl
                nfree += 1
                n1 -= 1
                nd += 1
        ist[N1] = n1
        ist[NB] = nb
        ist[NSLOT] = nslot
        ist[NFREE] = nfree
        ist[NUP] = nu
        ist[NDOWN] = nd
        ist[NEV] = ne
        fst[TIME] = t
        fst[MANHOURS] = w
        st = SparseState(hk, hv, skey, spp, free, pslot, pdir, ist, fst, strides)
        fate[f] = result
        reached[f] = clock
        manhours[f] = w - w0 if clock else 0.0
        maxsize[f] = mx
        tend[f] = t
        nup[f] = nu
        ndown[f] = nd
        nev[f] = ne
    return st, fate, manhours, maxsize, tend, nup, ndown, nev, reached, hit_t, hit_b
