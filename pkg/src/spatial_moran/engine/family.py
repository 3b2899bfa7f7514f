"""Single-family experiments on Z^d: one type-1 cell at the origin, u1 = 0.

The smoothed tunnelling estimator averages ``1 - exp(-u2 * W)`` over
families run *without* the 1->2 channel, where W is the family's man-hours.
Conditionally on the family this is exactly the probability that it throws
off a type 2, so it has the same mean as the 0/1 indicator and lower variance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..lattice import CoordinateOverflow
from ..streams import chunks, map_replicas, replica_rng
from . import _codes as C
from ._sparse import run_family_batch, sparse_new
from .params import Caps, Fate, FamilyOutcome, RunawayError, SimParams

log = logging.getLogger(__name__)

#: families per random stream; fixed so results never depend on threading
FAMILIES_PER_STREAM = 10_000

_FATES = {
    C.FATE_EXTINCT: Fate.EXTINCT,
    C.FATE_TYPE2: Fate.TYPE2_BORN,
    C.FATE_SIZE_CAP: Fate.SIZE_CAP_HIT,
    C.FATE_MANHOUR_CAP: Fate.MANHOUR_CAP_HIT,
}


@dataclass
class FamilyBatch:
    """Column-wise outcomes of many families (one row per family)."""

    fate: np.ndarray
    man_hours: np.ndarray
    max_size: np.ndarray
    t_end: np.ndarray
    up_jumps: np.ndarray
    down_jumps: np.ndarray
    events: np.ndarray
    reached_clock: np.ndarray
    levels: np.ndarray
    hit_times: np.ndarray
    hit_boundary: np.ndarray

    def __len__(self):
        return self.fate.size

    def outcome(self, i: int) -> FamilyOutcome:
        hits = {
            int(k): float(t)
            for k, t in zip(self.levels, self.hit_times[i])
            if not math.isnan(t)
        }
        fate = _FATES[int(self.fate[i])]
        final = 0 if fate is Fate.EXTINCT else int(self.up_jumps[i] - self.down_jumps[i] + 1)
        return FamilyOutcome(
            fate=fate,
            man_hours=float(self.man_hours[i]),
            max_size=int(self.max_size[i]),
            t_end=float(self.t_end[i]),
            up_jumps=int(self.up_jumps[i]),
            down_jumps=int(self.down_jumps[i]),
            first_hit_times=hits,
            final_size=final,
        )


@dataclass
class NuEstimate:
    u2: float
    nu_hat: float
    stderr: float
    reps: int
    n_capped: int
    n_size_capped: int = 0
    samples: Optional[np.ndarray] = field(default=None, repr=False)


def _require_family_mode(params: SimParams) -> None:
    if params.geometry.is_torus:
        raise ValueError("single-family runs use the unbounded lattice")
    if params.u1 != 0.0:
        raise ValueError("single-family runs require u1 = 0")


def _family_chunk(task):
    (d, bits, origin, seed, index, n, lam, u2_channel, komarova, wcap, size_cap,
     levels, clock_level, max_events) = task
    rng = replica_rng(seed, index)
    st = sparse_new(d, bits, 64)
    out = run_family_batch(st, origin, n, lam, u2_channel, komarova, wcap, size_cap,
                           levels, clock_level, max_events, rng)
    return out[1:]


def run_families(
    params: SimParams,
    reps: int,
    *,
    levels: Sequence[int] = (),
    mutation: bool = True,
    clock_level: int = 1,
    manhour_cap: Optional[float] = None,
    size_cap: Optional[int] = None,
    first_stream: int = 0,
    threads: Optional[int] = None,
) -> FamilyBatch:
    """Run ``reps`` independent families and return their outcomes.

    ``mutation=False`` switches the 1->2 channel off (the family then ends
    by extinction or a cap).  ``first_stream`` offsets the replica streams,
    which lets callers extend a sample without reusing randomness.
    """
    _require_family_mode(params)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    g = params.geometry
    caps = params.caps
    wcap = caps.resolved_manhour_cap(params.u2) if manhour_cap is None else float(manhour_cap)
    size_cap = caps.size_cap if size_cap is None else int(size_cap)
    lv = np.array(sorted(set(int(k) for k in levels)), dtype=np.int64)
    if lv.size and lv[0] < 1:
        raise ValueError("levels must be >= 1")
    u2_channel = params.u2 if mutation else 0.0
    tasks = [
        (g.dimension, g.pack_bits, g.origin_key, params.seed, first_stream + i, n,
         params.lam, u2_channel, params.komarova, wcap, size_cap, lv, clock_level,
         caps.max_events)
        for i, n in chunks(reps, FAMILIES_PER_STREAM)
    ]
    parts = map_replicas(_family_chunk, tasks, threads)
    cols = [np.concatenate([p[j] for p in parts]) for j in range(10)]
    batch = FamilyBatch(*cols[:8], levels=lv, hit_times=cols[8], hit_boundary=cols[9])
    if np.any(batch.fate == C.FATE_OVERFLOW):
        raise CoordinateOverflow("a family reached the coordinate packing bound")
    if np.any(batch.fate == C.FATE_EVENT_BUDGET):
        raise RunawayError("a family exhausted its event budget", {"max_events": caps.max_events})
    return batch


def run_family(
    params: SimParams,
    caps: Optional[Caps] = None,
    rng: Optional[np.random.Generator] = None,
    levels: Sequence[int] = (),
) -> FamilyOutcome:
    """One family with the 1->2 channel live."""
    _require_family_mode(params)
    caps = caps or params.caps
    rng = rng if rng is not None else replica_rng(params.seed, 0)
    g = params.geometry
    lv = np.array(sorted(set(int(k) for k in levels)), dtype=np.int64)
    st = sparse_new(g.dimension, g.pack_bits, 64)
    out = run_family_batch(st, g.origin_key, 1, params.lam, params.u2, params.komarova,
                           caps.resolved_manhour_cap(params.u2), caps.size_cap, lv, 1,
                           caps.max_events, rng)
    batch = FamilyBatch(*[o for o in out[1:9]], levels=lv, hit_times=out[9], hit_boundary=out[10])
    if batch.fate[0] == C.FATE_OVERFLOW:
        raise CoordinateOverflow("the family reached the coordinate packing bound")
    if batch.fate[0] == C.FATE_EVENT_BUDGET:
        raise RunawayError("event budget exhausted", {"max_events": caps.max_events})
    return batch.outcome(0)


def _smoothed(u2: float, man_hours: np.ndarray) -> np.ndarray:
    return -np.expm1(-u2 * man_hours)


def _summarise(u2, x, batch, wcap) -> NuEstimate:
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return NuEstimate(
        u2=u2,
        nu_hat=float(x.mean()),
        stderr=se,
        reps=n,
        n_capped=int(np.count_nonzero(batch.man_hours >= wcap)),
        n_size_capped=int(np.count_nonzero(batch.fate == C.FATE_SIZE_CAP)),
        samples=x,
    )


def estimate_nu(
    params: SimParams,
    reps: int,
    caps: Optional[Caps] = None,
    threads: Optional[int] = None,
) -> NuEstimate:
    """Smoothed estimate of the tunnelling probability at ``params.u2``."""
    _require_family_mode(params)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if params.u2 == 0.0:
        return NuEstimate(0.0, 0.0, 0.0, reps, 0, samples=np.zeros(reps))
    if caps is not None:
        params = SimParams(params.geometry, params.lam, params.u1, params.u2,
                           params.dynamics, params.seed, caps)
    wcap = params.caps.resolved_manhour_cap(params.u2)
    batch = run_families(params, reps, mutation=False, manhour_cap=wcap, threads=threads)
    return _summarise(params.u2, _smoothed(params.u2, batch.man_hours), batch, wcap)


def estimate_nu_curve(
    params: SimParams,
    u2_values: Sequence[float],
    reps: int,
    threads: Optional[int] = None,
) -> List[NuEstimate]:
    """Estimates at several u2 from one set of families (common random numbers).

    Families are capped for the smallest u2, which is also a valid cap for
    every larger value, so each estimate is the one ``estimate_nu`` would
    return for a run capped at the smallest u2.
    """
    u2s = [float(u) for u in u2_values]
    if not u2s or min(u2s) <= 0:
        raise ValueError("u2 values must be positive")
    wcap = params.caps.resolved_manhour_cap(min(u2s))
    batch = run_families(params, reps, mutation=False, manhour_cap=wcap, threads=threads)
    return [_summarise(u, _smoothed(u, batch.man_hours), batch, wcap) for u in u2s]


def estimate_nu_eps(
    params: SimParams,
    level: int,
    reps: int,
    threads: Optional[int] = None,
) -> NuEstimate:
    """Tunnelling probability ignoring type 2s produced before size ``level``.

    The mutation clock starts at the first time the family reaches ``level``;
    families that die first contribute 0.
    """
    if params.u2 <= 0:
        raise ValueError("u2 must be positive")
    wcap = params.caps.resolved_manhour_cap(params.u2)
    batch = run_families(params, reps, mutation=False, clock_level=int(level),
                         manhour_cap=wcap, threads=threads)
    x = np.where(batch.reached_clock, _smoothed(params.u2, batch.man_hours), 0.0)
    return _summarise(params.u2, x, batch, wcap)


def max_size_tail(params: SimParams, levels: Sequence[int], reps: int,
                  threads: Optional[int] = None) -> Dict[int, float]:
    """Empirical P(max size >= k) for each k, mutation off, stopped at max(levels)."""
    top = max(int(k) for k in levels)
    batch = run_families(params, reps, mutation=False, manhour_cap=math.inf,
                         size_cap=top, threads=threads)
    return {int(k): float(np.mean(batch.max_size >= k)) for k in levels}


@dataclass
class BoundaryRow:
    k: int
    boundary_mean: float
    boundary_stderr: float
    count: int


def boundary_profile(
    params: SimParams,
    levels: Sequence[int],
    reps: int,
    *,
    max_families: int = 10**8,
    threads: Optional[int] = None,
) -> List[BoundaryRow]:
    """Mean boundary size at the first time the family has ``k`` sites.

    Families are run (neutral, no mutation) until ``reps`` of them have
    reached the largest level; every family reaching a level contributes to
    that level's average.
    """
    _require_family_mode(params)
    if params.lam != 1.0 or params.u2 != 0.0:
        raise ValueError("boundary_profile is defined for lambda = 1, u2 = 0")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    lv = sorted(set(int(k) for k in levels))
    top = lv[-1]
    collected = [[] for _ in lv]
    batch_size = FAMILIES_PER_STREAM
    stream = 0
    run = 0
    while len(collected[-1]) < reps:
        if run >= max_families:
            raise RunawayError(
                f"only {len(collected[-1])} of {reps} families reached size {top}",
                {"families": run},
            )
        b = run_families(params, batch_size, levels=lv, mutation=False, manhour_cap=math.inf,
                         size_cap=top, first_stream=stream, threads=threads)
        for j in range(len(lv)):
            vals = b.hit_boundary[:, j]
            collected[j].extend(vals[vals >= 0].tolist())
        stream += math.ceil(batch_size / FAMILIES_PER_STREAM)
        run += batch_size
    rows = []
    for k, vals in zip(lv, collected):
        v = np.asarray(vals, dtype=float)
        se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
        rows.append(BoundaryRow(k, float(v.mean()) if v.size else math.nan, se, int(v.size)))
    return rows


@dataclass
class ConditionedManhours:
    level: int
    die_mean: float
    die_stderr: float
    n_die: int
    reach_mean: float
    reach_stderr: float
    n_reach: int


def conditioned_manhours(
    params: SimParams,
    level: int,
    min_die: int,
    *,
    min_reach: int = 0,
    threads: Optional[int] = None,
) -> ConditionedManhours:
    """Man-hours of families stopped at the first of T_0 and T_level.

    Families are run in stream-sized batches until at least ``min_die`` have
    died before reaching ``level`` and ``min_reach`` have reached it; the two
    groups give the conditional means E[W | T_0 < T_level] and
    E[W | T_level < T_0].
    """
    _require_family_mode(params)
    die: list = []
    reach: list = []
    stream = 0
    while len(die) < min_die or len(reach) < min_reach:
        b = run_families(params, FAMILIES_PER_STREAM, mutation=False, manhour_cap=math.inf,
                         size_cap=level, first_stream=stream, threads=threads)
        die.extend(b.man_hours[b.fate == C.FATE_EXTINCT].tolist())
        reach.extend(b.man_hours[b.fate == C.FATE_SIZE_CAP].tolist())
        stream += 1

    def ms(v):
        v = np.asarray(v)
        if v.size == 0:
            return math.nan, math.nan
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0

    dm, ds = ms(die)
    rm, rs = ms(reach)
    return ConditionedManhours(level, dm, ds, len(die), rm, rs, len(reach))
