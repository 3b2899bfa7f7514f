import math

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given, settings, strategies as st

from spatial_moran.stats import kolmogorov_sf, ks_exponential, loglog_slope, mean_ci


def test_kolmogorov_tail_matches_scipy():
    xs = np.linspace(0.02, 3.0, 500)
    assert max(abs(kolmogorov_sf(x) - sp.kolmogorov(x)) for x in xs) < 1e-12


def test_ks_point_mass():
    r = ks_exponential([math.log(2) / 3.0] * 10, 3.0)
    assert r.statistic == pytest.approx(0.5, abs=1e-15)
    # 0.693 is ln 2 rounded: max(F, 1 - F) with F = 1 - exp(-0.693)
    r = ks_exponential([0.693 / 2.0] * 4, 2.0)
    assert r.statistic == pytest.approx(math.exp(-0.693), abs=1e-15)
    assert 0 <= r.p_value <= 1 and r.n == 4


def test_ks_errors():
    with pytest.raises(ValueError):
        ks_exponential([], 1.0)
    with pytest.raises(ValueError):
        ks_exponential([1.0, 0.0], 1.0)
    with pytest.raises(ValueError):
        ks_exponential([1.0], -1.0)


def test_ks_null_calibration():
    passes = 0
    for seed in range(200):
        x = np.random.default_rng(seed).exponential(1 / 2.5, 2000)
        passes += ks_exponential(x, 2.5).p_value > 0.01
    assert passes >= 196


def test_ks_detects_wrong_rate():
    x = np.random.default_rng(0).exponential(1.0, 2000)
    assert ks_exponential(x, 1.2).p_value < 1e-4


@settings(max_examples=50)
@given(st.floats(1e-3, 1e3), st.integers(0, 10_000))
def test_ks_scale_invariance(c, seed):
    x = np.random.default_rng(seed).exponential(1.0, 50)
    a = ks_exponential(x, 1.3)
    b = ks_exponential(c * x, 1.3 / c)
    assert a.statistic == pytest.approx(b.statistic, abs=1e-12)


def test_mean_ci_examples():
    assert mean_ci([4.0] * 7) == (4.0, 0.0)
    m, h = mean_ci([0.0, 2.0], 0.95)
    assert m == 1.0 and h == pytest.approx(1.959964, abs=1e-6)
    for level in (0.0, 1.0, 1.5):
        with pytest.raises(ValueError):
            mean_ci([1.0, 2.0], level)


def test_mean_ci_coverage():
    rng = np.random.default_rng(11)
    hits = 0
    trials = 2000
    for _ in range(trials):
        m, h = mean_ci(rng.exponential(2.0, 400), 0.95)
        hits += abs(m - 2.0) <= h
    assert abs(hits / trials - 0.95) < 0.02


def test_slope_examples():
    xs = [1e-7, 1e-6, 1e-5, 1e-4, 1e-3]
    assert loglog_slope([(x, x ** (1 / 3)) for x in xs]) == pytest.approx(1 / 3, abs=1e-12)
    assert loglog_slope([(x, 7.5 * x**0.5) for x in xs]) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        loglog_slope([(1.0, 1.0)])
    with pytest.raises(ValueError):
        loglog_slope([(1.0, 1.0), (2.0, -1.0)])
