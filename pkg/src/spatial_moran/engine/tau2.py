"""Full-population runs on the torus until the first type-2 cell."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..streams import map_replicas, replica_rng
from ._torus import run_tau2_batch, torus_new
from .params import RunawayError, SimParams, Tau2Sample


def _validate(params: SimParams) -> None:
    if not params.geometry.is_torus:
        raise ValueError("tau2 runs need a torus geometry")
    if params.u1 <= 0 or params.u2 <= 0:
        raise ValueError("tau2 runs need u1 > 0 and u2 > 0")


def _run(params: SimParams, rng: np.random.Generator, st=None) -> Tau2Sample:
    g = params.geometry
    st = torus_new(g.dimension, g.side) if st is None else st
    tau2, rho2, nfam, nev, status = run_tau2_batch(
        st, 1, params.lam, params.u1, params.u2, params.komarova, params.caps.max_events, rng
    )
    if status[0] != 0:
        raise RunawayError(
            "tau2 run exhausted its event budget" if status[0] == 1 else "absorbed",
            {"time": float(st.fst[0]), "n1": int(st.ist[0]), "n_families": int(nfam[0]),
             "events": int(nev[0])},
        )
    return Tau2Sample(float(tau2[0]), float(rho2[0]), int(nfam[0]))


def run_tau2(params: SimParams, rng: Optional[np.random.Generator] = None) -> Tau2Sample:
    """Start from all type 0; stop at the first 1->2 mutation event.

    ``rho2`` is the founding time of the lineage label carried by the cell
    that mutates.
    """
    _validate(params)
    return _run(params, rng if rng is not None else replica_rng(params.seed, 0))


def _tau2_chunk(task):
    params, first, n = task
    g = params.geometry
    st = torus_new(g.dimension, g.side)
    return [_run(params, replica_rng(params.seed, i), st) for i in range(first, first + n)]


@dataclass
class Tau2Batch:
    samples: List[Tau2Sample]

    @property
    def tau2(self) -> np.ndarray:
        return np.array([s.tau2 for s in self.samples])

    @property
    def rho2(self) -> np.ndarray:
        return np.array([s.rho2 for s in self.samples])

    @property
    def n_families(self) -> np.ndarray:
        return np.array([s.n_families for s in self.samples])


def sample_tau2(params: SimParams, reps: int, threads: Optional[int] = None) -> Tau2Batch:
    """``reps`` independent runs; replicate i uses stream (seed, i)."""
    _validate(params)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    per = 50
    tasks = [(params, s, min(per, reps - s)) for s in range(0, reps, per)]
    parts = map_replicas(_tau2_chunk, tasks, threads)
    return Tau2Batch([x for p in parts for x in p])
