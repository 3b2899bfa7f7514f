"""Compiled kernels for the full population on the torus (Z mod L)^d.

All N sites are stored densely.  ``perm`` keeps the type-1 sites in its first
``n1`` entries (``pos`` is its inverse) so that uniform type-0 and type-1
sites can be drawn in O(1).  Each type-1 site carries a lineage label: the
id of the 0->1 mutation that founded its family and that mutation's time.
"""

from collections import namedtuple

import numpy as np
from numba import njit

from ._codes import (
    EV_ABSORBED, EV_DOWN, EV_MUT01, EV_MUT12, EV_NOOP, EV_UP, FST_SIZE,
    IST_SIZE, MANHOURS, N1, NB, NDOWN, NEV, NFAM, NUP, SITE, TIME,
)

TorusState = namedtuple(
    "TorusState", ["typ", "nbr", "pp", "psite", "pdir", "perm", "pos", "fam", "org", "ist", "fst"]
)


@njit(cache=True)
def torus_new(d, side):
    n = side**d
    twod = 2 * d
    nbr = np.empty((n, twod), np.int64)
    for s in range(n):
        rem = s
        stride = 1
        for i in range(d):
            c = rem % side
            rem //= side
            lo = s - c * stride + ((c - 1) % side) * stride
            hi = s - c * stride + ((c + 1) % side) * stride
            nbr[s, 2 * i] = lo
            nbr[s, 2 * i + 1] = hi
            stride *= side
    typ = np.zeros(n, np.int8)
    pp = np.full((n, twod), -1, np.int64)
    psite = np.empty(n * twod, np.int64)
    pdir = np.empty(n * twod, np.int64)
    perm = np.arange(n)
    pos = np.arange(n)
    fam = np.full(n, -1, np.int64)
    org = np.full(n, np.nan)
    ist = np.zeros(IST_SIZE, np.int64)
    fst = np.zeros(FST_SIZE, np.float64)
    return TorusState(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, fst)


@njit(inline="always")
def _add_pair(pp, psite, pdir, ist, site, direction):
    b = ist[NB]
    psite[b] = site
    pdir[b] = direction
    pp[site, direction] = b
    ist[NB] = b + 1


@njit(inline="always")
def _remove_pair(pp, psite, pdir, ist, site, direction):
    p = pp[site, direction]
    last = ist[NB] - 1
    if p != last:
        s2 = psite[last]
        d2 = pdir[last]
        psite[p] = s2
        pdir[p] = d2
        pp[s2, d2] = p
    pp[site, direction] = -1
    ist[NB] = last


@njit(inline="always")
def _swap_perm(perm, pos, a, b):
    sa = perm[a]
    sb = perm[b]
    perm[a] = sb
    perm[b] = sa
    pos[sb] = a
    pos[sa] = b


@njit(inline="always")
def _up(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, y, family, origin_time):
    typ[y] = 1
    n1 = ist[N1]
    _swap_perm(perm, pos, pos[y], n1)
    ist[N1] = n1 + 1
    fam[y] = family
    org[y] = origin_time
    for dr in range(nbr.shape[1]):
        z = nbr[y, dr]
        if typ[z] == 1:
            _remove_pair(pp, psite, pdir, ist, z, dr ^ 1)
            pp[y, dr] = -1
        else:
            _add_pair(pp, psite, pdir, ist, y, dr)


@njit(inline="always")
def _down(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, x):
    typ[x] = 0
    n1 = ist[N1] - 1
    _swap_perm(perm, pos, pos[x], n1)
    ist[N1] = n1
    fam[x] = -1
    org[x] = np.nan
    for dr in range(nbr.shape[1]):
        z = nbr[x, dr]
        if typ[z] == 1:
            _add_pair(pp, psite, pdir, ist, z, dr ^ 1)
        else:
            _remove_pair(pp, psite, pdir, ist, x, dr)


@njit(cache=True)
def torus_flip_up(st, y, family, origin_time):
    _up(st.typ, st.nbr, st.pp, st.psite, st.pdir, st.perm, st.pos, st.fam, st.org, st.ist,
        y, family, origin_time)


@njit(cache=True)
def torus_flip_down(st, x):
    _down(st.typ, st.nbr, st.pp, st.psite, st.pdir, st.perm, st.pos, st.fam, st.org, st.ist, x)


@njit(cache=True)
def torus_clear(st):
    """Return to the all-type-0 configuration at time 0."""
    for j in range(st.ist[N1]):
        s = st.perm[j]
        st.typ[s] = 0
        st.fam[s] = -1
        st.org[s] = np.nan
        for dr in range(st.pp.shape[1]):
            st.pp[s, dr] = -1
    st.ist[:] = 0
    st.fst[:] = 0.0


@njit(inline="always")
def _step(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, fst, lam, u1, u2, komarova, rng):
    """One event.  Channel order: flip-up, flip-down, mutate-01, mutate-12.

    With no type-1 cells only the mutate-01 channel is live, so the
    exponential holding time is exactly the quiescent waiting time.
    """
    n = typ.size
    n1 = ist[N1]
    nb = ist[NB]
    twod = nbr.shape[1]
    if komarova:
        up_rate = 2.0 * nb
        flip_rate = up_rate
    else:
        up_rate = lam * nb / twod
        flip_rate = up_rate + nb / twod
    m01 = u1 * (n - n1)
    total = flip_rate + m01 + u2 * n1
    if total <= 0.0:
        return EV_ABSORBED
    dt = rng.exponential() / total
    t = fst[TIME] + dt
    fst[TIME] = t
    fst[MANHOURS] += n1 * dt
    ist[NEV] += 1
    r = rng.random() * total
    if r < flip_rate:
        i = min(int(rng.random() * nb), nb - 1)
        x = psite[i]
        y = nbr[x, pdir[i]]
        if not komarova:
            if r < up_rate:
                ist[SITE] = y
                ist[NUP] += 1
                _up(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, y, fam[x], org[x])
                return EV_UP
            ist[SITE] = x
            ist[NDOWN] += 1
            _down(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, x)
            return EV_DOWN
        z = x if rng.random() < 0.5 else y
        n1z = 0
        for k in range(twod):
            n1z += typ[nbr[z, k]]
        n0z = twod - n1z
        z_is_one = typ[z] == 1
        disc = n0z if z_is_one else n1z
        ist[SITE] = z
        if rng.random() * disc >= 1.0:
            return EV_NOOP
        becomes_one = rng.random() * (lam * n1z + n0z) < lam * n1z
        if z_is_one and not becomes_one:
            ist[NDOWN] += 1
            _down(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, z)
            return EV_DOWN
        if (not z_is_one) and becomes_one:
            # parent: uniform type-1 neighbour (all type 1 have equal fitness)
            j = min(int(rng.random() * n1z), n1z - 1)
            parent = -1
            for k in range(twod):
                w = nbr[z, k]
                if typ[w] == 1:
                    if j == 0:
                        parent = w
                        break
                    j -= 1
            ist[NUP] += 1
            _up(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, z, fam[parent], org[parent])
            return EV_UP
        return EV_NOOP
    r -= flip_rate
    if r < m01:
        j = n1 + min(int(rng.random() * (n - n1)), n - n1 - 1)
        y = perm[j]
        ist[SITE] = y
        fid = ist[NFAM]
        ist[NFAM] = fid + 1
        _up(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, y, fid, t)
        return EV_MUT01
    j = min(int(rng.random() * n1), n1 - 1)
    ist[SITE] = perm[j]
    return EV_MUT12


@njit(cache=True)
def torus_step(st, lam, u1, u2, komarova, rng):
    return _step(st.typ, st.nbr, st.pp, st.psite, st.pdir, st.perm, st.pos, st.fam, st.org,
                 st.ist, st.fst, lam, u1, u2, komarova, rng)


@njit(cache=True)
def run_tau2_batch(st, nrep, lam, u1, u2, komarova, max_events, rng):
    """Run ``nrep`` independent populations until the first 1->2 mutation.

    Returns tau2, rho2, number of 0->1 mutations, event counts and a status
    flag per replicate (0 ok, 1 event budget exhausted, 2 absorbed).
    """
    tau2 = np.full(nrep, np.nan)
    rho2 = np.full(nrep, np.nan)
    nfam = np.zeros(nrep, np.int64)
    nev = np.zeros(nrep, np.int64)
    status = np.zeros(nrep, np.int8)
    typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, fst = st
    for r in range(nrep):
        torus_clear(st)
        while True:
            if ist[NEV] >= max_events:
                status[r] = 1
                break
            code = _step(typ, nbr, pp, psite, pdir, perm, pos, fam, org, ist, fst,
                         lam, u1, u2, komarova, rng)
            if code == EV_MUT12:
                tau2[r] = fst[TIME]
                rho2[r] = org[ist[SITE]]
                break
            if code == EV_ABSORBED:
                status[r] = 2
                break
        nfam[r] = ist[NFAM]
        nev[r] = ist[NEV]
    return tau2, rho2, nfam, nev, status
