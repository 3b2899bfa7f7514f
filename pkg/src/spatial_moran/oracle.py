"""Exact computations for the birth-death chain followed by a family's size.

The chain lives on 0..M, is absorbed at both ends and jumps at total rate
q(k) from level k, upwards with probability lam/(1+lam).  For the neutral
chain the random-walk closed forms below give hitting probabilities and
expected man-hours; every one of them has a second route through dense
linear algebra on the (possibly h-transformed) chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import BETA_2, h_d
from .engine.params import InvariantError

#: largest chain handled by the dense solver
MAX_LEVEL = 1024
AGREE_RTOL = 1e-10


def jump_rate(d: int, k: int, beta: Optional[float] = None) -> float:
    """Total jump rate q(k) at level k >= 1 under the boundary asymptotics.

    In d = 2, ln k is replaced by ln 2 at k = 1 so that q(1) is finite.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if d == 1:
        return 2.0
    if beta is None:
        if d != 2:
            raise ValueError("beta is required for d = 3")
        beta = BETA_2
    if d == 2:
        return 4.0 * beta * k / math.log(k if k > 1 else 2)
    if d == 3:
        return 2.0 * d * beta * k
    raise ValueError(f"dimension must be 1, 2 or 3, got {d}")


@dataclass(frozen=True)
class SizeChain:
    d: int
    M: int
    lam: float = 1.0
    beta: Optional[float] = None

    def __post_init__(self):
        if not 2 <= self.M <= MAX_LEVEL:
            raise ValueError(f"M must lie in [2, {MAX_LEVEL}]")
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        self.q(1)  # validates d and beta

    def q(self, k: int) -> float:
        return jump_rate(self.d, k, self.beta)

    @property
    def rates(self) -> np.ndarray:
        """q(k) for k = 0..M, with 0 at the absorbing ends."""
        r = np.zeros(self.M + 1)
        for k in range(1, self.M):
            r[k] = self.q(k)
        return r

    @property
    def p_up(self) -> float:
        return self.lam / (1.0 + self.lam)

    def generator(self) -> np.ndarray:
        """Rate matrix; rows of the absorbing states are zero."""
        m = self.M
        G = np.zeros((m + 1, m + 1))
        p = self.p_up
        for k in range(1, m):
            qk = self.q(k)
            G[k, k + 1] = qk * p
            G[k, k - 1] = qk * (1 - p)
            G[k, k] = -qk
        return G

    def transition(self) -> np.ndarray:
        """Embedded jump chain; absorbing rows are identity rows."""
        m = self.M
        P = np.zeros((m + 1, m + 1))
        P[0, 0] = P[m, m] = 1.0
        p = self.p_up
        for k in range(1, m):
            P[k, k + 1] = p
            P[k, k - 1] = 1 - p
        return P

    def _require_neutral(self):
        if self.lam != 1.0:
            raise ValueError("closed forms hold for the neutral chain only")


# -- linear algebra ----------------------------------------------------------


def _absorption(P: np.ndarray, target: int, stop) -> np.ndarray:
    """P_j(hit target before any state in ``stop``) for every j (linear solve)."""
    n = P.shape[0]
    free = [j for j in range(n) if j != target and j not in stop]
    x = np.zeros(n)
    x[target] = 1.0
    if free:
        A = np.eye(len(free)) - P[np.ix_(free, free)]
        rhs = P[np.ix_(free, [target])][:, 0]
        x[free] = np.linalg.solve(A, rhs)
    return x


def _conditioned(P: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Doob transform of P by the harmonic function h (zero rows where h = 0)."""
    Q = np.zeros_like(P)
    pos = h > 0
    Q[np.ix_(pos, pos)] = P[np.ix_(pos, pos)] * h[pos][None, :] / h[pos][:, None]
    return Q


def _visits(Q: np.ndarray, transient, start: int) -> np.ndarray:
    """Expected visits (first included) to each transient state from ``start``."""
    idx = {s: i for i, s in enumerate(transient)}
    A = np.eye(len(transient)) - Q[np.ix_(transient, transient)]
    e = np.zeros(len(transient))
    e[idx[start]] = 1.0
    # row of the fundamental matrix: solve (I - Q)^T g = e_start
    return np.linalg.solve(A.T, e)


# -- hitting table -----------------------------------------------------------


@dataclass
class VisitTable:
    """Per-level quantities for k = 1..M-1 of the embedded walk.

    ``hit_bar``: P(reach k from 1 | T_0 < T_M); ``escape_bar``: P(from k,
    T_0 before returning to k | T_0 < T_M); ``escape_hat``: P(from k, T_M
    before returning | T_M < T_0); ``visits_bar``/``visits_hat``: expected
    visits to k under the two conditionings.
    """

    k: np.ndarray
    hit_bar: np.ndarray
    escape_bar: np.ndarray
    escape_hat: np.ndarray
    visits_bar: np.ndarray
    visits_hat: np.ndarray


def hitting_and_visits(chain: SizeChain, method: str = "closed") -> VisitTable:
    m = chain.M
    k = np.arange(1, m, dtype=float)
    if method == "closed":
        chain._require_neutral()
        hit_bar = (1 / k) * (1 - k / m) / (1 - 1 / m)
        escape_bar = 0.5 * (1 / k) / (1 - k / m)
        escape_hat = 0.5 * (1 / (m - k)) / (k / m)
        hit_hat = np.ones_like(k)  # conditioned on reaching M every level is visited
        return VisitTable(k.astype(int), hit_bar, escape_bar, escape_hat,
                          hit_bar / escape_bar, hit_hat / escape_hat)
    if method != "linear":
        raise ValueError("method must be 'closed' or 'linear'")
    P = chain.transition()
    h_die = _absorption(P, 0, {m})
    h_reach = _absorption(P, m, {0})
    Qd = _conditioned(P, h_die)
    Qr = _conditioned(P, h_reach)
    hit_bar = np.empty(m - 1)
    escape_bar = np.empty(m - 1)
    escape_hat = np.empty(m - 1)
    for i, lvl in enumerate(range(1, m)):
        hit_bar[i] = _absorption(Qd, lvl, {0})[1] if lvl > 1 else 1.0
        # one step away from lvl, then reach the exit before coming back
        to0 = _absorption(Qd, 0, {lvl})
        escape_bar[i] = Qd[lvl] @ to0
        tom = _absorption(Qr, m, {lvl})
        escape_hat[i] = Qr[lvl] @ tom
    transient = list(range(1, m))
    visits_bar = _visits(Qd, transient, 1)
    visits_hat = _visits(Qr, transient, 1)
    return VisitTable(k.astype(int), hit_bar, escape_bar, escape_hat, visits_bar, visits_hat)


# -- conditioned man-hours ---------------------------------------------------


def _check_level(chain: SizeChain, n_eps: Optional[int]) -> None:
    if n_eps is not None and n_eps != chain.M:
        raise ValueError("n_eps must equal the chain's absorbing level M")


def _manhours_sum(chain: SizeChain, conditioning: str) -> float:
    chain._require_neutral()
    m = chain.M
    k = np.arange(1, m, dtype=float)
    qk = np.array([chain.q(int(j)) for j in k])
    if conditioning == "die":
        # P_1(T_k < oo)/P_k(T_k+ > T_0) under the bar, times k/q(k)
        hit = (1 / k) * (1 - k / m) / (1 - 1 / m)
        esc = 0.5 * (1 / k) / (1 - k / m)
        return float(np.sum(hit / esc * k / qk))
    esc = 0.5 * (1 / (m - k)) / (k / m)
    return float(np.sum(1 / esc * k / qk))


def _manhours_solve(chain: SizeChain, conditioning: str) -> float:
    m = chain.M
    P = chain.transition()
    h = _absorption(P, 0, {m}) if conditioning == "die" else _absorption(P, m, {0})
    Q = _conditioned(P, h)
    transient = list(range(1, m))
    g = _visits(Q, transient, 1)
    levels = np.arange(1, m, dtype=float)
    return float(np.sum(g * levels / chain.rates[1:m]))


def _both(chain: SizeChain, conditioning: str, method: str) -> float:
    if method == "sum":
        return _manhours_sum(chain, conditioning)
    if method == "solve":
        return _manhours_solve(chain, conditioning)
    if method != "both":
        raise ValueError("method must be 'sum', 'solve' or 'both'")
    a = _manhours_sum(chain, conditioning)
    b = _manhours_solve(chain, conditioning)
    if not math.isclose(a, b, rel_tol=AGREE_RTOL, abs_tol=0.0):
        raise InvariantError(f"man-hour routes disagree: sum {a!r}, solve {b!r}")
    return a


def conditioned_manhours_die(chain: SizeChain, n_eps: Optional[int] = None,
                             method: str = "both") -> float:
    """E_1[integral of size up to T_0 | T_0 < T_M].

    ``method='both'`` evaluates the random-walk sum and the Doob-transform
    solve and raises InvariantError unless they agree to 1e-10 (relative).
    The solve also handles lam != 1.
    """
    _check_level(chain, n_eps)
    if chain.lam != 1.0 and method == "both":
        method = "solve"
    return _both(chain, "die", method)


def conditioned_manhours_reach(chain: SizeChain, n_eps: Optional[int] = None,
                               method: str = "both") -> float:
    """E_1[integral of size up to T_M | T_M < T_0]."""
    _check_level(chain, n_eps)
    if chain.lam != 1.0 and method == "both":
        method = "solve"
    return _both(chain, "reach", method)


# -- small families ----------------------------------------------------------


def die_sum(chain: SizeChain, normalized: bool = True) -> float:
    """2 sum_k (1 - k/M)^2 k/q(k), divided by (1 - 1/M) when ``normalized``.

    The normalized form is the exact conditional mean for the neutral chain;
    the bare sum is the one bounded by the integral in :func:`integral_bounds`.
    """
    m = chain.M
    k = np.arange(1, m + 1, dtype=float)
    qk = np.array([chain.q(int(j)) for j in k])
    s = 2.0 * float(np.sum((1 - k / m) ** 2 * k / qk))
    return s / (1 - 1 / m) if normalized else s


def not_yet_sum(chain: SizeChain) -> float:
    """(2/M) sum_k (M - k) k^2/q(k): man-hours before a family reaches M."""
    m = chain.M
    k = np.arange(1, m + 1, dtype=float)
    qk = np.array([chain.q(int(j)) for j in k])
    return 2.0 / m * float(np.sum((m - k) * k**2 / qk))


def integral_bounds(d: int, M: int, beta: Optional[float] = None):
    """Integral bounds on ``die_sum(normalized=False)`` and ``not_yet_sum``."""
    m = float(M)
    if d == 1:
        return m**2 / 12.0, m**3 / 6.0
    if beta is None:
        if d != 2:
            raise ValueError("beta is required for d = 3")
        beta = BETA_2
    if d == 2:
        lm = math.log(m)
        return m * lm / (2 * beta), m**3 / 6.0 * lm / (2 * beta * m)
    return m / 3.0 / (d * beta), m**3 / 6.0 / (d * beta * m)


@dataclass(frozen=True)
class SmallFamilyBounds:
    """Bounds per unit N*u1 on the type-2 rate from small families.

    ``die``: families that die before size n*eps; ``not_yet``: families
    that will reach it but have not; ``total`` is their sum.
    """

    die: float
    not_yet: float
    total: float


def small_family_bounds(d: int, u2: float, eps: float,
                        beta: Optional[float] = None) -> SmallFamilyBounds:
    if eps <= 0:
        raise ValueError("eps must be positive")
    h = h_d(d, u2)
    if d == 1:
        die, ny = eps**2 / 12.0, eps**2 / 6.0
    else:
        if beta is None:
            if d != 2:
                raise ValueError("beta is required for d = 3")
            beta = BETA_2
        if d == 2:
            die, ny = eps / (4 * beta), eps / (24 * beta)
        else:
            die, ny = eps / (3 * d * beta), eps / (6 * d * beta)
    return SmallFamilyBounds(die * h, ny * h, (die + ny) * h)
