import math

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given, strategies as st

from spatial_moran import analytic as A


def test_h_examples():
    assert A.h_d(1, 1e-6) == pytest.approx(1e-2, rel=1e-12)
    assert A.h_d(3, 1e-4) == pytest.approx(1e-2, rel=1e-12)
    assert A.h_d(2, 1e-4) == pytest.approx(math.sqrt(1e-4 * math.log(1e4)), rel=1e-14)
    assert A.h_d(2, 1e-4) == pytest.approx(0.030348, abs=1e-6)


def test_g_examples():
    assert A.g_d(3, 0.3) == 1.0
    assert A.g_d(1, 1e-3) == pytest.approx(0.1, rel=1e-12)
    assert A.g_d(2, 1e-4) == pytest.approx(0.32950, abs=1e-5)
    assert A.g_d(2, 1e-4) == pytest.approx(math.log(1e4) ** -0.5, rel=1e-14)


@pytest.mark.parametrize("f", [A.h_d, A.g_d])
@pytest.mark.parametrize("u", [0.0, 1.0, -1e-3, 2.0])
def test_scale_domain(f, u):
    with pytest.raises(ValueError):
        f(1, u)


def test_a_n_examples():
    assert A.a_n(1, 100) == 1e4
    assert A.a_n(3, 7) == 7
    assert A.a_n(2, 100) == pytest.approx(921.03, abs=5e-3)


def test_airy_at_zero():
    assert A.airy_ai(0.0) == pytest.approx(0.3550280539, abs=1e-10)
    assert A.airy_ai_prime(0.0) == pytest.approx(-0.2588194038, abs=1e-10)
    assert A.airy_ai(1.0) == pytest.approx(0.1352924163, abs=1e-10)


def test_airy_zero_matches_integral_definition():
    # Ai(0) = (1/pi) int_0^oo cos(t^3/3) dt = Gamma(1/3) / (2 pi 3^(1/6))
    assert A.airy_ai(0.0) == pytest.approx(math.gamma(1 / 3) / (2 * math.pi * 3 ** (1 / 6)),
                                           abs=1e-13)


def test_airy_against_scipy_on_range():
    xs = np.linspace(0.0, 40.0, 4001)
    ai, aip, _, _ = sp.airy(xs)
    assert max(abs(A.airy_ai(x) - a) for x, a in zip(xs, ai)) < 1e-10
    assert max(abs(A.airy_ai_prime(x) - a) for x, a in zip(xs, aip)) < 1e-10


def test_airy_decreasing_and_domain():
    assert A.airy_ai(5) < A.airy_ai(1) < A.airy_ai(0)
    xs = np.linspace(0, 40, 400)
    vals = [A.airy_ai(x) for x in xs]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    for x in (-0.1, 40.5):
        with pytest.raises(ValueError):
            A.airy_ai(x)
        with pytest.raises(ValueError):
            A.airy_ai_prime(x)


def test_gamma_values():
    assert A.gamma_d(1) == pytest.approx(0.729011, abs=5e-7)
    assert A.gamma_d(1) == pytest.approx(3 ** (1 / 3) * math.gamma(2 / 3) / math.gamma(1 / 3))
    assert A.gamma_d(2, math.pi) == pytest.approx(0.564190, abs=5e-7)
    assert A.gamma_d(3, 0.6595) == pytest.approx(0.6595**-0.5, rel=1e-14)
    assert A.gamma_d(3, 0.6595) == pytest.approx(1.23138, abs=5e-6)
    with pytest.raises(ValueError):
        A.gamma_d(3)
    with pytest.raises(ValueError):
        A.gamma_d(2, -1.0)


def test_gamma_1_is_airy_log_derivative():
    assert A.gamma_d(1) == pytest.approx(-A.airy_ai_prime(0) / A.airy_ai(0), rel=1e-12)


def test_v_examples():
    assert A.v_of_x(1, 0.0) == pytest.approx(1.0, abs=1e-10)
    assert A.v_of_x(2, 1.0, math.pi) == pytest.approx(math.exp(-math.pi**-0.5), rel=1e-12)
    assert A.v_of_x(2, 1.0, math.pi) == pytest.approx(0.568821, abs=5e-7)
    assert A.v_of_x(1, 1.0) == pytest.approx(0.1352924163 / 0.3550280539, rel=1e-9)
    assert A.v_of_x(1, 1.0) == pytest.approx(0.3812, abs=2e-4)


@pytest.mark.parametrize("d, beta", [(1, None), (2, math.pi), (3, 0.66)])
def test_v_decreasing_in_unit_interval(d, beta):
    xs = np.linspace(0, 30, 301)
    v = [A.v_of_x(d, x, beta) for x in xs]
    assert v[0] == pytest.approx(1.0, abs=1e-10)
    assert all(0 < b < a <= 1 + 1e-12 for a, b in zip(v, v[1:]))


@pytest.mark.parametrize("x", [0.5, 1.0, 2.0, 5.0])
def test_airy_ode_residual(x):
    h = 1e-3
    v = lambda y: A.v_of_x(1, y)
    second = (v(x + h) - 2 * v(x) + v(x - h)) / h**2
    assert abs(second - x * v(x)) < 1e-4


@pytest.mark.parametrize("d, beta", [(1, None), (2, math.pi), (3, 0.66)])
def test_slope_at_zero_converges_to_gamma(d, beta):
    g = A.gamma_d(d, beta)
    errs = []
    for eps in (1e-2, 1e-3, 1e-4):
        slope = -(A.v_of_x(d, eps, beta) - 1.0) / eps
        errs.append(abs(slope - g))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-4


def test_tau2_rate_example():
    r = A.tau2_rate(1000, 1e-8, 1e-6, 1)
    assert r.rate == pytest.approx(7.2901e-8, rel=1e-4)
    assert r.inv_h == pytest.approx(100)
    assert r.g_over_u1 == pytest.approx(1e6)
    assert r.regime_ok
    assert A.tau2_rate(1000, 0.0, 1e-6, 1).rate == 0.0
    assert not A.tau2_rate(50, 1e-8, 1e-6, 1).regime_ok


@given(st.floats(1, 1e6), st.floats(1e-12, 1e-3), st.floats(1, 100))
def test_tau2_rate_linear(N, u1, k):
    base = A.tau2_rate(N, u1, 1e-5, 2).rate
    assert A.tau2_rate(k * N, u1, 1e-5, 2).rate == pytest.approx(k * base, rel=1e-12)
    assert A.tau2_rate(N, k * u1, 1e-5, 2).rate == pytest.approx(k * base, rel=1e-12)


def test_hit_prob_examples():
    assert A.hit_prob(1.0, 1, 0, 10) == pytest.approx(0.1)
    assert A.hit_prob(2.0, 1, 0, 3) == pytest.approx(4 / 7, rel=1e-12)
    assert A.hit_prob(1 + 1e-12, 3, 0, 9) == pytest.approx(1 / 3, abs=1e-9)
    for bad in [(1.0, 0, 0, 3), (1.0, 3, 0, 3), (0.0, 1, 0, 3)]:
        with pytest.raises(ValueError):
            A.hit_prob(*bad)


def test_hit_prob_continuous_across_switch():
    below = A.hit_prob(1 + 0.99e-8, 4, 0, 50)
    above = A.hit_prob(1 + 1.01e-8, 4, 0, 50)
    assert abs(below - above) < 5e-8


lams = st.floats(0.2, 5.0)


@given(lams, st.integers(-50, 50), st.integers(1, 40), st.integers(1, 40))
def test_hit_prob_complement(lam, a, dx, db):
    x, b = a + dx, a + dx + db
    up = A.hit_prob(lam, x, a, b)
    # mirror: the walk hits a before b, i.e. the reflected walk with 1/lam hits -a before -b
    down = A.hit_prob(1 / lam, -x, -b, -a)
    assert 0 <= up <= 1
    assert up + down == pytest.approx(1.0, abs=1e-12)


@given(lams, st.integers(-50, 50), st.integers(1, 30), st.integers(1, 30), st.integers(-100, 100))
def test_hit_prob_translation(lam, a, dx, db, shift):
    x, b = a + dx, a + dx + db
    assert A.hit_prob(lam, x + shift, a + shift, b + shift) == pytest.approx(
        A.hit_prob(lam, x, a, b), abs=1e-12)


def test_hit_prob_matches_power_form():
    lam, x, a, b = 1.3, 2, -3, 7
    th = 1 / lam
    assert A.hit_prob(lam, x, a, b) == pytest.approx((th**x - th**a) / (th**b - th**a), rel=1e-12)


def test_gap_examples():
    assert A.uniform_neutrality_gap(1.0, 5.0, 0.01) == 0.0
    assert A.uniform_neutrality_gap(1.001, 1.0, 0.01) < 0.06
    gaps = [A.uniform_neutrality_gap(1.001, C, 0.01) for C in (0.1, 0.3, 1.0, 2.0)]
    assert all(a <= b for a, b in zip(gaps, gaps[1:]))
    # vanishes as |lambda - 1| / h -> 0
    assert A.uniform_neutrality_gap(1.0001, 1.0, 0.01) < gaps[2] / 5


def test_predict_bundle():
    p = A.predict(1, 1e-6, N=1000, u1=1e-8)
    assert p.nu_pred == pytest.approx(0.729011 * 0.01, rel=1e-6)
    assert p.rate == pytest.approx(7.2901e-8, rel=1e-4)
    assert p.n == pytest.approx(100) and p.a_n == pytest.approx(1e4)
    p2 = A.predict(2, 1e-4)
    assert p2.beta == math.pi and p2.gamma == pytest.approx(math.pi**-0.5)
    assert p2.rate is None
    for q in (p, p2, A.predict(3, 1e-4, beta=0.66)):
        assert 0 < q.nu_pred < 1 and q.h > 0 and q.g > 0 and q.a_n > 0 and q.gamma > 0
