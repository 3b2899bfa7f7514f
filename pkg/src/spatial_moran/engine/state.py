"""Lattice configurations and the single-event ``step`` API.

:class:`LatticeState` wraps the compiled arrays of either kernel and exposes
them as sites, pairs and labels.  Bulk experiments do not go through
``step``; they call the batch kernels directly (see ``family`` and ``tau2``).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from ..lattice import CoordinateOverflow, Geometry, Site, decode, encode, neighbors
from . import _codes as C
from ._hashtable import ht_find
from ._sparse import sparse_advance, sparse_ensure, sparse_flip_up, sparse_new
from ._torus import torus_clear, torus_flip_up, torus_new, torus_step
from .params import InvariantError, SimParams


class EventKind(str, Enum):
    FLIP_UP = "flip_up"
    FLIP_DOWN = "flip_down"
    MUTATE_01 = "mutate_01"
    MUTATE_12 = "mutate_12"
    NOOP = "noop"
    ABSORBED = "absorbed"


_KIND = {
    C.EV_UP: EventKind.FLIP_UP,
    C.EV_DOWN: EventKind.FLIP_DOWN,
    C.EV_MUT01: EventKind.MUTATE_01,
    C.EV_MUT12: EventKind.MUTATE_12,
    C.EV_NOOP: EventKind.NOOP,
    C.EV_ABSORBED: EventKind.ABSORBED,
}


@dataclass(frozen=True)
class Event:
    kind: EventKind
    site: Optional[Site]
    time: float


class LatticeState:
    """Type-1 configuration plus its discordant-pair index.

    On the torus every site is stored; on Z^d only type-1 sites are, and
    there is a single family (label ``(0, 0.0)``).
    """

    def __init__(self, geometry: Geometry):
        self.geometry = geometry
        d = geometry.dimension
        if geometry.is_torus:
            self._st = torus_new(d, geometry.side)
        else:
            self._st = sparse_new(d, geometry.pack_bits, 64)

    # -- construction ------------------------------------------------------

    @classmethod
    def single_site(cls, geometry: Geometry, site: Optional[Iterable[int]] = None) -> "LatticeState":
        site = (0,) * geometry.dimension if site is None else tuple(site)
        return cls.from_sites(geometry, [site])

    @classmethod
    def from_sites(cls, geometry: Geometry, sites: Iterable[Iterable[int]]) -> "LatticeState":
        state = cls(geometry)
        for x in {geometry.validate(tuple(s)) for s in sites}:
            state._place(x)
        return state

    def _place(self, x: Site) -> None:
        key = encode(self.geometry, x)
        if self.geometry.is_torus:
            if self._st.typ[key] == 0:
                torus_flip_up(self._st, key, 0, 0.0)
                self._st.ist[C.NFAM] = 1
            return
        if ht_find(self._st.hk, key) >= 0:
            return
        self._st = sparse_ensure(self._st)
        if sparse_flip_up(self._st, key) == C.EV_OVERFLOW:
            raise CoordinateOverflow(f"site {x} too close to the packing bound")

    def reset(self) -> None:
        """Torus only: back to all type 0 at time 0."""
        if not self.geometry.is_torus:
            raise ValueError("reset() applies to the torus; build a new state on Z^d")
        torus_clear(self._st)

    # -- observables ---------------------------------------------------------

    @property
    def time(self) -> float:
        return float(self._st.fst[C.TIME])

    @property
    def man_hours(self) -> float:
        return float(self._st.fst[C.MANHOURS])

    @property
    def n1(self) -> int:
        return int(self._st.ist[C.N1])

    @property
    def n0(self) -> float:
        return self.geometry.site_count - self.n1

    @property
    def boundary(self) -> int:
        """Number of unordered adjacent (type 1, type 0) pairs."""
        return int(self._st.ist[C.NB])

    @property
    def events(self) -> int:
        return int(self._st.ist[C.NEV])

    @property
    def n_families(self) -> int:
        return int(self._st.ist[C.NFAM])

    def _type1_keys(self) -> np.ndarray:
        st = self._st
        if self.geometry.is_torus:
            return st.perm[: self.n1].copy()
        keys = st.skey[: st.ist[C.NSLOT]]
        return keys[keys >= 0].copy()

    def type1_sites(self) -> Set[Site]:
        return {decode(self.geometry, k) for k in self._type1_keys()}

    def discordant_pairs(self) -> List[Tuple[Site, Site]]:
        """Ordered pairs (x, y), x type 1, y type 0, in index order."""
        st = self._st
        g = self.geometry
        out = []
        owners = st.psite if g.is_torus else st.pslot
        for i in range(self.boundary):
            owner = owners[i]
            key = owner if g.is_torus else st.skey[owner]
            x = decode(g, key)
            out.append((x, neighbors(g, x)[st.pdir[i]]))
        return out

    def labels(self) -> Dict[Site, Tuple[int, float]]:
        g = self.geometry
        if not g.is_torus:
            return {x: (0, 0.0) for x in self.type1_sites()}
        st = self._st
        return {decode(g, k): (int(st.fam[k]), float(st.org[k])) for k in self._type1_keys()}

    def check_consistency(self) -> None:
        """Compare the incremental pair index with a from-scratch rebuild."""
        g = self.geometry
        ones = self.type1_sites()
        if len(ones) != self.n1:
            raise InvariantError(f"n1={self.n1} but {len(ones)} type-1 sites stored")
        expected = {(x, y) for x in ones for y in neighbors(g, x) if y not in ones}
        got = self.discordant_pairs()
        if len(got) != len(set(got)) or set(got) != expected:
            raise InvariantError(
                f"pair index mismatch: {len(got)} indexed, {len(expected)} expected"
            )
        st = self._st
        owners = st.psite if g.is_torus else st.pslot
        pp = st.pp if g.is_torus else st.spp
        for i in range(self.boundary):
            if pp[owners[i], st.pdir[i]] != i:
                raise InvariantError(f"back-pointer of pair {i} is stale")
        if g.is_torus:
            if int(st.typ.sum()) != self.n1 or not np.all(st.typ[st.perm[: self.n1]] == 1):
                raise InvariantError("type-1 partition of the site permutation is stale")


def step(state: LatticeState, params: SimParams, rng: np.random.Generator) -> Event:
    """Advance ``state`` by one event of the continuous-time dynamics.

    A type-2 mutation is reported but not applied: the model stops there.
    When no channel has positive rate the state is absorbed and an
    ``ABSORBED`` event is returned without advancing time.
    """
    g = state.geometry
    if g != params.geometry:
        raise ValueError("state and params use different geometries")
    if g.is_torus:
        code = torus_step(state._st, params.lam, params.u1, params.u2, params.komarova, rng)
    else:
        if params.u1 != 0.0:
            raise ValueError("0->1 mutations need a finite population (torus geometry)")
        state._st, code = sparse_advance(state._st, params.lam, params.u2, params.komarova, rng)
        if code == C.EV_OVERFLOW:
            raise CoordinateOverflow("a family reached the coordinate packing bound")
    kind = _KIND[code]
    site = None if kind is EventKind.ABSORBED else decode(g, state._st.ist[C.SITE])
    return Event(kind, site, state.time)
