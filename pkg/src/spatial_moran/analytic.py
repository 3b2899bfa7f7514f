"""Closed-form scaling functions, tunnelling constants and hitting probabilities.

Logarithms are natural throughout.  All rates use the engine's clock, in
which a neutral family in d = 1 changes size at total rate 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

#: Ai(0) = 3^(-2/3) / Gamma(2/3)
AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
#: -Ai'(0) = 3^(-1/3) / Gamma(1/3)
AIP0 = 3.0 ** (-1.0 / 3.0) / math.gamma(1.0 / 3.0)
#: two-dimensional boundary constant
BETA_2 = math.pi

AIRY_MAX_X = 40.0
_SERIES_MAX_X = 5.0
NEUTRAL_SWITCH = 1e-8


def _check_dim(d: int) -> int:
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    return d


def _check_u(u: float) -> float:
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u}")
    return float(u)


def h_d(d: int, u: float) -> float:
    """Tunnelling scale: u^(1/3), sqrt(u ln(1/u)), sqrt(u) for d = 1, 2, 3."""
    _check_dim(d)
    u = _check_u(u)
    if d == 1:
        return u ** (1.0 / 3.0)
    if d == 2:
        return math.sqrt(u * math.log(1.0 / u))
    return math.sqrt(u)


def g_d(d: int, u: float) -> float:
    """Upper regime scale: u^(1/3), ln(1/u)^(-1/2), 1."""
    _check_dim(d)
    u = _check_u(u)
    if d == 1:
        return u ** (1.0 / 3.0)
    if d == 2:
        return 1.0 / math.sqrt(math.log(1.0 / u))
    return 1.0


def a_n(d: int, n: float) -> float:
    """Time for a family of size n to change size by order n."""
    _check_dim(d)
    if n <= 0:
        raise ValueError("n must be positive")
    if d == 1:
        return float(n) ** 2
    if d == 2:
        return 2.0 * n * math.log(n)
    return float(n)


# -- Airy -------------------------------------------------------------------


def _airy_series(x: float):
    # Ai = Ai(0) f - |Ai'(0)| g with f, g the two Maclaurin solutions
    if x == 0.0:
        return AI0, -AIP0
    x3 = x * x * x
    a = 1.0  # coefficient of x^(3k) in f
    b = 1.0  # coefficient of x^(3k+1) in g
    f = g = 0.0
    fp = gp = 0.0
    xp = 1.0  # x^(3k)
    for k in range(200):
        f += a * xp
        g += b * xp * x
        if k:
            fp += 3 * k * a * xp / x
        gp += (3 * k + 1) * b * xp
        if a * xp < 1e-18 * max(f, 1.0) and b * xp * x < 1e-18 * max(g, 1.0) and k > 2:
            break
        a /= (3 * k + 2) * (3 * k + 3)
        b /= (3 * k + 3) * (3 * k + 4)
        xp *= x3
    return AI0 * f - AIP0 * g, AI0 * fp - AIP0 * gp


def _airy_asymptotic(x: float):
    zeta = 2.0 / 3.0 * x**1.5
    su = sv = 0.0
    u = 1.0
    prev = math.inf
    for k in range(60):
        v = u if k == 0 else -(6 * k + 1) / (6 * k - 1) * u
        term = u / zeta**k
        if abs(term) > prev:
            break
        sign = -1.0 if k % 2 else 1.0
        su += sign * term
        sv += sign * v / zeta**k
        prev = abs(term)
        if prev < 1e-17:
            break
        k1 = k + 1
        u *= (6 * k1 - 5) * (6 * k1 - 3) * (6 * k1 - 1) / ((2 * k1 - 1) * 216.0 * k1)
    e = math.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    return e * x**-0.25 * su, -e * x**0.25 * sv


def _airy(x: float):
    if x <= _SERIES_MAX_X:
        return _airy_series(x)
    return _airy_asymptotic(x)


def _check_airy_x(x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= AIRY_MAX_X:
        raise ValueError(f"x must lie in [0, {AIRY_MAX_X}], got {x}")
    return x


def airy_ai(x: float) -> float:
    """Ai(x) for 0 <= x <= 40."""
    return _airy(_check_airy_x(x))[0]


def airy_ai_prime(x: float) -> float:
    """Ai'(x) for 0 <= x <= 40."""
    return _airy(_check_airy_x(x))[1]


# -- tunnelling constants -----------------------------------------------------


def _default_beta(d: int, beta: Optional[float]) -> float:
    if beta is None:
        if d == 2:
            return BETA_2
        raise ValueError("beta is required for d = 3 (see engine.estimate_beta)")
    if not beta > 0:
        raise ValueError("beta must be positive")
    return float(beta)


def gamma_d(d: int, beta: Optional[float] = None) -> float:
    """gamma_1 = 3^(1/3) Gamma(2/3) / Gamma(1/3); gamma_d = beta^(-1/2) for d >= 2."""
    _check_dim(d)
    if d == 1:
        return 3.0 ** (1.0 / 3.0) * math.gamma(2.0 / 3.0) / math.gamma(1.0 / 3.0)
    return _default_beta(d, beta) ** -0.5


def v_of_x(d: int, x: float, beta: Optional[float] = None) -> float:
    """Bounded solution with v(0) = 1: Ai(x)/Ai(0) in d = 1, exp(-x/sqrt(beta)) otherwise."""
    _check_dim(d)
    if x < 0:
        raise ValueError("x must be >= 0")
    if d == 1:
        return _airy(float(x))[0] / AI0
    return math.exp(-float(x) * _default_beta(d, beta) ** -0.5)


# -- waiting time ------------------------------------------------------------


@dataclass(frozen=True)
class Tau2Rate:
    """Predicted rate of tau2 and where the parameters sit relative to the regime.

    The limit law needs 1/h_d(u2) << N << g_d(u2)/u1; ``regime_ok`` only
    checks the strict ordering.
    """

    rate: float
    inv_h: float
    N: float
    g_over_u1: float

    @property
    def regime_ok(self) -> bool:
        return self.inv_h < self.N < self.g_over_u1


def tau2_rate(N: float, u1: float, u2: float, d: int, beta: Optional[float] = None) -> Tau2Rate:
    if N <= 0 or u1 < 0:
        raise ValueError("need N > 0 and u1 >= 0")
    h = h_d(d, u2)
    rate = N * u1 * gamma_d(d, beta) * h
    g_over = g_d(d, u2) / u1 if u1 > 0 else math.inf
    return Tau2Rate(rate, 1.0 / h, float(N), g_over)


# -- biased hitting ------------------------------------------------------------


def hit_prob(lam: float, x: int, a: int, b: int) -> float:
    """P_x(T_b < T_a) for the walk stepping up w.p. lam/(1+lam)."""
    if not a < x < b:
        raise ValueError("need a < x < b")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if abs(lam - 1.0) < NEUTRAL_SWITCH:
        return (x - a) / (b - a)
    # (theta^x - theta^a)/(theta^b - theta^a) with theta = 1/lam, divided by theta^a
    lt = -math.log(lam)
    return math.expm1((x - a) * lt) / math.expm1((b - a) * lt)


def uniform_neutrality_gap(lam: float, C: float, h: float) -> float:
    """sup over 1 <= -a, b <= C/h of |P_0(T_b < T_a) / (-a/(b-a)) - 1|."""
    if lam <= 0 or C <= 0 or h <= 0:
        raise ValueError("lambda, C and h must be positive")
    m = int(math.floor(C / h))
    if m < 1 or abs(lam - 1.0) < NEUTRAL_SWITCH:
        return 0.0
    lt = -math.log(lam)
    depth = np.arange(1, m + 1, dtype=float)  # -a
    height = np.arange(1, m + 1, dtype=float)  # b
    worst = 0.0
    for da in depth:
        p = np.expm1(da * lt) / np.expm1((da + height) * lt)
        neutral = da / (da + height)
        worst = max(worst, float(np.max(np.abs(p / neutral - 1.0))))
    return worst


# -- bundle -----------------------------------------------------------------


@dataclass(frozen=True)
class Predictions:
    d: int
    u2: float
    h: float
    g: float
    n: float
    a_n: float
    beta: Optional[float]
    gamma: float
    nu_pred: float
    rate: Optional[float] = None
    regime: Optional[Tau2Rate] = None


def predict(
    d: int,
    u2: float,
    *,
    N: Optional[float] = None,
    u1: Optional[float] = None,
    beta: Optional[float] = None,
) -> Predictions:
    """Every closed-form quantity at ``u2``; the size scale is n = 1/h_d(u2).

    ``beta`` is unused in d = 1 and defaults to pi in d = 2.
    """
    _check_dim(d)
    h = h_d(d, u2)
    g = g_d(d, u2)
    b = None if d == 1 else _default_beta(d, beta)
    gam = gamma_d(d, b)
    n = 1.0 / h
    reg = tau2_rate(N, u1, u2, d, b) if N is not None and u1 is not None else None
    return Predictions(
        d=d, u2=float(u2), h=h, g=g, n=n, a_n=a_n(d, n), beta=b, gamma=gam,
        nu_pred=gam * h, rate=reg.rate if reg else None, regime=reg,
    )
