import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatial_moran.analytic import hit_prob
from spatial_moran.engine import (
    Caps, Dynamics, EventKind, Fate, LatticeState, RunawayError, SimParams,
    boundary_profile, conditioned_manhours, estimate_beta, estimate_nu, max_size_tail,
    run_families, run_family, run_tau2, sample_tau2, step,
)
from spatial_moran.lattice import Geometry
from spatial_moran.oracle import SizeChain, conditioned_manhours_die, conditioned_manhours_reach
from spatial_moran.stats import ks_exponential
from spatial_moran.streams import replica_rng


def Z(d):
    return Geometry.unbounded(d)


def _first_events(geometry, params, n, seed, sites=None):
    kinds, times = [], []
    rng = replica_rng(seed, 0)
    for _ in range(n):
        s = (LatticeState.single_site(geometry) if sites is None
             else LatticeState.from_sites(geometry, sites))
        ev = step(s, params, rng)
        kinds.append(ev.kind)
        times.append(ev.time)
    return kinds, np.array(times)


def _within(p_hat, p, n, z=4.0):
    return abs(p_hat - p) <= z * math.sqrt(p * (1 - p) / n)


@pytest.mark.parametrize("d", [1, 2])
def test_single_site_first_event(d):
    g = Z(d)
    n = 20_000
    kinds, times = _first_events(g, SimParams(g), n, seed=3)
    up = sum(k is EventKind.FLIP_UP for k in kinds)
    assert set(kinds) <= {EventKind.FLIP_UP, EventKind.FLIP_DOWN}
    assert _within(up / n, 0.5, n)
    # total rate 2: B = 2d pairs, (1 + 1) * 2d / (2d)
    assert ks_exponential(times, 2.0).p_value > 1e-3


def test_biased_interval_up_probability():
    g = Z(1)
    n = 20_000
    kinds, times = _first_events(g, SimParams(g, lam=2.0), n, seed=4,
                                 sites=[(i,) for i in range(5)])
    up = sum(k is EventKind.FLIP_UP for k in kinds)
    assert _within(up / n, 2 / 3, n)
    assert ks_exponential(times, 3.0).p_value > 1e-3


def test_absorbed_state():
    g = Geometry.torus(1, 5)
    s = LatticeState(g)
    ev = step(s, SimParams(g), replica_rng(0, 0))
    assert ev.kind is EventKind.ABSORBED and s.time == 0.0


def test_geometry_mismatch_and_u1_on_z():
    s = LatticeState.single_site(Z(1))
    with pytest.raises(ValueError):
        step(s, SimParams(Z(2)), replica_rng(0, 0))
    with pytest.raises(ValueError):
        step(s, SimParams(Z(1), u1=0.1), replica_rng(0, 0))


def test_params_validation():
    with pytest.raises(ValueError):
        SimParams(Z(1), lam=0.0)
    with pytest.raises(ValueError):
        SimParams(Z(1), u2=-1.0)
    with pytest.raises(ValueError):
        SimParams(Z(1), seed=-1)


CASES = [
    (Z(1), Dynamics.BIASED_VOTER, 1.0),
    (Z(2), Dynamics.BIASED_VOTER, 1.3),
    (Z(3), Dynamics.KOMAROVA, 1.0),
    (Geometry.torus(1, 30), Dynamics.BIASED_VOTER, 1.0),
    (Geometry.torus(2, 8), Dynamics.KOMAROVA, 1.2),
    (Geometry.torus(3, 4), Dynamics.BIASED_VOTER, 0.9),
]


@pytest.mark.parametrize("g, dyn, lam", CASES, ids=lambda c: str(c))
def test_pair_index_matches_rebuild(g, dyn, lam):
    u1 = 0.05 if g.is_torus else 0.0
    p = SimParams(g, lam=lam, u1=u1, dynamics=dyn)
    rng = replica_rng(17, 0)
    sites = [(0,) * g.dimension, (1,) + (0,) * (g.dimension - 1)]
    s = LatticeState.from_sites(g, sites)
    s.check_consistency()
    checked = 0
    for i in range(6000):
        before = s.n1
        ev = step(s, p, rng)
        if ev.kind is EventKind.ABSORBED:
            s = LatticeState.from_sites(g, sites)
            continue
        delta = s.n1 - before
        if ev.kind in (EventKind.FLIP_UP, EventKind.MUTATE_01):
            assert delta == 1
        elif ev.kind is EventKind.FLIP_DOWN:
            assert delta == -1
        else:
            assert delta == 0
        if i % 50 == 0:
            s.check_consistency()
            checked += 1
    s.check_consistency()
    assert checked > 100


def test_d1_family_stays_interval():
    g = Z(1)
    p = SimParams(g)
    rng = replica_rng(5, 0)
    s = LatticeState.single_site(g)
    for _ in range(20_000):
        step(s, p, rng)
        if s.n1 == 0:
            s = LatticeState.single_site(g)
            continue
        xs = sorted(x[0] for x in s.type1_sites())
        assert xs[-1] - xs[0] + 1 == len(xs)
        assert s.boundary == 2


def test_manhours_are_size_times_holding_time():
    g = Z(2)
    p = SimParams(g, lam=1.1)
    rng = replica_rng(8, 0)
    s = LatticeState.single_site(g)
    acc, t = 0.0, 0.0
    for _ in range(3000):
        n = s.n1
        ev = step(s, p, rng)
        if ev.kind is EventKind.ABSORBED:
            break
        acc += n * (ev.time - t)
        t = ev.time
    assert s.man_hours == pytest.approx(acc, rel=1e-10)


@pytest.mark.parametrize("d, lam", [(1, 1.0), (2, 1.0), (3, 1.0), (1, 1.5), (3, 0.8)])
def test_up_jump_indicator_is_bernoulli_at_every_size(d, lam):
    g = Z(d)
    p = SimParams(g, lam=lam)
    rng = replica_rng(21, d)
    buckets = {(1, 1): [0, 0], (2, 5): [0, 0], (6, 20): [0, 0], (21, 60): [0, 0]}
    s = LatticeState.single_site(g)
    for _ in range(120_000):
        n = s.n1
        ev = step(s, p, rng)
        for (lo, hi), c in buckets.items():
            if lo <= n <= hi:
                c[0] += ev.kind is EventKind.FLIP_UP
                c[1] += 1
        if s.n1 == 0 or s.n1 > 60:
            s = LatticeState.single_site(g)
    target = lam / (1 + lam)
    for c in buckets.values():
        assert c[1] > 500
        assert _within(c[0] / c[1], target, c[1])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_martingale_hitting_law(d):
    n = 40_000
    tail = max_size_tail(SimParams(Z(d), seed=d), [2, 5, 10, 50], n)
    for k, pk in tail.items():
        assert _within(pk, 1 / k, n), (k, pk)


@pytest.mark.parametrize("b", [5, 10])
def test_biased_hitting_law(b):
    n = 100_000
    tail = max_size_tail(SimParams(Z(1), lam=1.2, seed=b), [b], n)
    target = hit_prob(1.2, 1, 0, b)
    assert abs(tail[b] - target) <= 3 * math.sqrt(target * (1 - target) / n)


def test_boundary_is_two_in_one_dimension():
    rows = boundary_profile(SimParams(Z(1)), [1, 2, 10, 50], 100)
    for r in rows:
        assert r.boundary_mean == 2.0 and r.boundary_stderr == 0.0


def test_boundary_rejects_biased():
    with pytest.raises(ValueError):
        boundary_profile(SimParams(Z(2), lam=1.1), [10], 5)


def test_conditioned_manhours_small_chain():
    c = conditioned_manhours(SimParams(Z(1), seed=2), 4, 60_000, min_reach=20_000)
    die = conditioned_manhours_die(SizeChain(1, 4))
    reach = conditioned_manhours_reach(SizeChain(1, 4))
    assert die == pytest.approx(5 / 3) and reach == pytest.approx(5.0)
    assert abs(c.die_mean - die) < 3 * c.die_stderr
    assert abs(c.reach_mean - reach) < 3 * c.reach_stderr


def test_huge_u2_gives_type2_immediately():
    p = SimParams(Z(2), u2=1e6, seed=1)
    fates = [run_family(p, rng=replica_rng(1, i)) for i in range(300)]
    assert sum(f.fate is Fate.TYPE2_BORN for f in fates) >= 299
    assert max(f.t_end for f in fates) < 1e-4


def test_zero_u2_estimate_is_zero():
    est = estimate_nu(SimParams(Z(1), u2=0.0), 100, Caps(size_cap=1000))
    assert est.nu_hat == 0.0 and est.stderr == 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 3), st.floats(0.5, 1.5), st.sampled_from([0.0, 1e-3]))
def test_family_outcome_invariants(seed, d, lam, u2):
    p = SimParams(Z(d), lam=lam, u2=u2, seed=seed, caps=Caps(size_cap=2000))
    o = run_family(p, levels=[1, 3, 10])
    assert o.man_hours >= 0 and o.max_size >= 1 and o.t_end >= 0
    assert o.first_hit_times[1] == 0.0
    if o.fate is Fate.EXTINCT:
        assert o.final_size == 0
        assert o.up_jumps + 1 == o.down_jumps
    for k, t in o.first_hit_times.items():
        assert k <= o.max_size and 0 <= t <= o.t_end
    assert list(o.first_hit_times.values()) == sorted(o.first_hit_times.values())


def test_event_budget_is_reported():
    p = SimParams(Z(1), lam=5.0, caps=Caps(manhour_cap=math.inf, max_events=50))
    with pytest.raises(RunawayError):
        run_families(p, 200, mutation=False)


def test_families_deterministic():
    p = SimParams(Z(2), u2=1e-3, seed=99)
    a = run_families(p, 25_000, levels=[5])
    b = run_families(p, 25_000, levels=[5], threads=2)
    for f in ("fate", "man_hours", "max_size", "t_end", "up_jumps", "down_jumps"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    assert np.array_equal(a.hit_times, b.hit_times, equal_nan=True)
    c = run_families(SimParams(Z(2), u2=1e-3, seed=100), 1000)
    assert not np.array_equal(a.man_hours[:1000], c.man_hours)


def _torus_params(**kw):
    base = dict(geometry=Geometry.torus(1, 50), u1=1e-3, u2=1e-2, seed=3)
    base.update(kw)
    return SimParams(**base)


def test_tau2_deterministic_and_ordered():
    p = _torus_params()
    a = sample_tau2(p, 120)
    b = sample_tau2(p, 120, threads=2)
    assert np.array_equal(a.tau2, b.tau2) and np.array_equal(a.rho2, b.rho2)
    assert np.all(a.rho2 > 0) and np.all(a.rho2 <= a.tau2)
    assert np.all(a.n_families >= 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 3), st.floats(0.8, 1.3))
def test_rho2_precedes_tau2(seed, d, lam):
    g = Geometry.torus(d, {1: 40, 2: 7, 3: 4}[d])
    s = run_tau2(SimParams(g, lam=lam, u1=1e-2, u2=0.05, seed=seed))
    assert 0 < s.rho2 <= s.tau2


def test_tau2_validation():
    with pytest.raises(ValueError):
        run_tau2(_torus_params(u1=0.0))
    with pytest.raises(ValueError):
        run_tau2(SimParams(Z(1), u1=1e-3, u2=1e-3))
    with pytest.raises(ValueError):
        sample_tau2(_torus_params(), 0)


def test_instant_tunnelling_limit():
    p = _torus_params(u1=1e-4, u2=1e6)
    b = sample_tau2(p, 2000)
    assert ks_exponential(b.tau2, 1e-4 * 50).p_value > 1e-3
    assert np.all(b.n_families == 1)


def test_quiescent_gap_is_exponential():
    # after every extinction the next 0->1 mutation arrives after Exp(u1 N)
    g = Geometry.torus(1, 40)
    u1 = 1e-3
    p = SimParams(g, u1=u1)
    rng = replica_rng(4, 0)
    s = LatticeState(g)
    gaps = []
    extinct_at = 0.0
    while len(gaps) < 3000:
        if s.n1 == g.site_count:
            # fixation: start again from all type 0 at time 0
            s.reset()
            extinct_at = 0.0
        ev = step(s, p, rng)
        if ev.kind is EventKind.MUTATE_01 and s.n1 == 1:
            gaps.append(ev.time - extinct_at)
        if ev.kind is EventKind.FLIP_DOWN and s.n1 == 0:
            extinct_at = ev.time
    assert ks_exponential(gaps, u1 * g.site_count).p_value > 1e-3


def test_beta_errors_and_range():
    with pytest.raises(ValueError):
        estimate_beta(reps=0)
    with pytest.raises(ValueError):
        estimate_beta(d=2)
    b = estimate_beta(walk_steps=500, reps=20_000, seed=1)
    assert 0 < b.beta < 1 and b.stderr > 0
    assert b.raw_survival > b.beta


@pytest.mark.slow
def test_beta_against_cutoff_extrapolation():
    # survival to n steps behaves like beta + A / sqrt(n); extrapolate from two cutoffs
    n1, n2 = 400, 3600
    s1 = estimate_beta(walk_steps=n1, reps=100_000, seed=31)
    s2 = estimate_beta(walk_steps=n2, reps=100_000, seed=32)
    r1, r2 = math.sqrt(n1), math.sqrt(n2)
    rich = (r2 * s2.raw_survival - r1 * s1.raw_survival) / (r2 - r1)

    def se(s):
        return math.sqrt(s.raw_survival * (1 - s.raw_survival) / s.reps)

    rich_se = math.hypot(r2 * se(s2), r1 * se(s1)) / (r2 - r1)
    mc = estimate_beta(walk_steps=2000, reps=100_000, seed=33)
    assert abs(mc.beta - rich) < 3 * math.hypot(mc.stderr, rich_se)
    assert mc.beta == pytest.approx(0.659, abs=0.01)
