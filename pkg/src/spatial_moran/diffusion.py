"""The diffusion limit of a rescaled family size and its killing functional.

Y solves dY = sqrt(2) dB in d = 1 and dY = sqrt(2 beta Y) dB in d >= 2,
absorbed at 0.  ``F_eps`` estimates 1 - E_eps exp(-c * integral of Y up to
T_0), which for c = 1 equals 1 - v(eps).

Paths use Euler-Maruyama with a step that grows as Y moves away from 0:
dt = dt0 * 4^m once Y >= eps * 2^m, but never so large that the step's
variance exceeds 50 * dt0/eps times Y^2 (5% at the default dt0 = eps/1000).
Halving dt0 therefore refines every scale.  In d = 1 the Gaussian
increments are exact and a Brownian-bridge test catches crossings of 0
between grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numba import njit

from .analytic import a_n, gamma_d, h_d
from .streams import chunks, map_replicas, replica_rng

PATHS_PER_STREAM = 10_000
DEFAULT_HORIZON = 1e4
#: paths stop once c * integral exceeds this; exp(-40) is below double epsilon
INTEGRAL_CAP = 40.0
#: relative step variance away from 0 is capped at this times dt0/eps
STEP_VARIANCE_FACTOR = 50.0

ABSORBED, STOPPED, CAPPED, LEVEL, HORIZON = 0, 1, 2, 3, 4


class HorizonError(RuntimeError):
    """A path outlived the simulation horizon."""

    def __init__(self, message: str, partial: Optional[dict] = None):
        super().__init__(message)
        self.partial = partial or {}


@dataclass(frozen=True)
class DiffusionParams:
    d: int
    eps: float
    beta: Optional[float] = None
    dt: Optional[float] = None
    kill_rate_scale: float = 1.0
    horizon: float = DEFAULT_HORIZON

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.d >= 2:
            if self.beta is None:
                if self.d == 3:
                    raise ValueError("beta is required for d = 3")
                object.__setattr__(self, "beta", math.pi)
            if not self.beta > 0:
                raise ValueError("beta must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.kill_rate_scale < 0:
            raise ValueError("kill_rate_scale must be >= 0")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dt0(self) -> float:
        return self.dt if self.dt is not None else self.eps * 1e-3

    @property
    def diffusivity(self) -> float:
        """Coefficient s in dY = sqrt(s Y^p) dB: 2 (d = 1) or 2 beta."""
        return 2.0 if self.d == 1 else 2.0 * self.beta


@njit(cache=True)
def _segment(one_dim, s, eps, dt0, c, y, t, acc, t_stop, level, icap, horizon, rng):
    """Advance one path until T_0, t_stop, Y >= level, the integral cap or the horizon."""
    log2 = math.log(2.0)
    limit = min(t_stop, horizon)
    rmax = STEP_VARIANCE_FACTOR * dt0 / eps
    while True:
        if y > 2.0 * eps:
            m = int(math.log(y / eps) / log2)
            cap = rmax * (y * y if one_dim else y) / s
            dt = max(dt0, min(dt0 * 4.0**m, cap))
        else:
            dt = dt0
        if level < math.inf:
            # keep the step small next to the level so the overshoot stays negligible
            gap = level - y
            near = gap * gap / (16.0 * s * (1.0 if one_dim else y))
            dt = min(dt, max(dt0, near))
        if t + dt >= limit:
            dt = limit - t
            if dt <= 0.0:
                return y, t, acc, STOPPED if t_stop <= horizon else HORIZON
        z = rng.standard_normal()
        if one_dim:
            yn = y + math.sqrt(s * dt) * z
        else:
            yn = y + math.sqrt(s * y * dt) * z
        if yn <= 0.0:
            f = y / (y - yn)
            return 0.0, t + f * dt, acc + 0.5 * y * f * dt, ABSORBED
        if one_dim and rng.random() < math.exp(-2.0 * y * yn / (s * dt)):
            # the bridge between the grid points touched 0
            return 0.0, t + 0.5 * dt, acc + 0.25 * y * dt, ABSORBED
        acc += 0.5 * (y + yn) * dt
        t += dt
        y = yn
        if y >= level:
            return y, t, acc, LEVEL
        if c * acc > icap:
            return y, t, acc, CAPPED


@njit(cache=True)
def _paths(n, one_dim, s, eps, dt0, c, t_stop, level, icap, horizon, rng):
    T = np.zeros(n)
    integ = np.zeros(n)
    yend = np.zeros(n)
    status = np.full(n, ABSORBED, np.int8)
    for p in range(n):
        if eps <= 0.0:
            continue
        y, t, acc, st = _segment(one_dim, s, eps, dt0, c, eps, 0.0, 0.0, t_stop, level,
                                 icap, horizon, rng)
        T[p] = t
        integ[p] = acc
        yend[p] = y
        status[p] = st
    return T, integ, yend, status


@njit(cache=True)
def _split_functional(n, one_dim, s, eps, dt0, c, icap, horizon, nsplit, rng):
    """Per root path, the weighted sum of 1 - exp(-c * integral) over its copies.

    A copy crossing eps * 2^j (j <= nsplit) for the first time is split into
    two of half the weight.  Y is a martingale, so each copy reaches the next
    threshold with probability about 1/2 and the expected number of copies
    alive at every threshold stays near one.
    """
    out = np.zeros(n)
    capped = 0
    lost = 0
    sy = np.empty(nsplit + 2)
    st_ = np.empty(nsplit + 2)
    sacc = np.empty(nsplit + 2)
    sw = np.empty(nsplit + 2)
    sj = np.empty(nsplit + 2, np.int64)
    for p in range(n):
        top = 0
        sy[0] = eps
        st_[0] = 0.0
        sacc[0] = 0.0
        sw[0] = 1.0
        sj[0] = 1
        top = 1
        total = 0.0
        while top > 0:
            top -= 1
            y, t, acc, w, j = sy[top], st_[top], sacc[top], sw[top], sj[top]
            level = eps * 2.0**j if j <= nsplit else math.inf
            y, t, acc, st = _segment(one_dim, s, eps, dt0, c, y, t, acc, math.inf, level,
                                     icap, horizon, rng)
            if st == LEVEL:
                for _ in range(2):
                    sy[top] = y
                    st_[top] = t
                    sacc[top] = acc
                    sw[top] = 0.5 * w
                    sj[top] = j + 1
                    top += 1
                continue
            if st == CAPPED:
                capped += 1
            elif st == HORIZON:
                lost += 1
            total += w * -math.expm1(-c * acc)
        out[p] = total
    return out, capped, lost


@dataclass
class PathBatch:
    T: np.ndarray
    integral: np.ndarray
    y_end: np.ndarray
    status: np.ndarray

    def __len__(self):
        return self.T.size


def _path_chunk(task):
    seed, index, n, one_dim, s, eps, dt0, c, t_stop, level, icap, horizon = task
    return _paths(n, one_dim, s, eps, dt0, c, t_stop, level, icap, horizon,
                  replica_rng(seed, index))


def simulate_paths(
    p: DiffusionParams,
    reps: int,
    seed: int = 0,
    *,
    t_stop: float = math.inf,
    level: float = math.inf,
    integral_cap: Optional[float] = None,
    threads: Optional[int] = None,
) -> PathBatch:
    """Many independent paths, each stopped at the first of T_0, ``t_stop``,
    the first time Y >= ``level``, c * integral > ``integral_cap`` or the
    horizon.  Stop reasons are in ``status``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    icap = math.inf if integral_cap is None else float(integral_cap)
    tasks = [
        (seed, i, n, p.d == 1, p.diffusivity, p.eps, p.dt0, p.kill_rate_scale,
         float(t_stop), float(level), icap, p.horizon)
        for i, n in chunks(reps, PATHS_PER_STREAM)
    ]
    parts = map_replicas(_path_chunk, tasks, threads)
    return PathBatch(*[np.concatenate([q[j] for q in parts]) for j in range(4)])


def simulate_path(p: DiffusionParams, rng: np.random.Generator) -> Tuple[float, float]:
    """(T_0, integral of Y over [0, T_0]) for one path."""
    T, integ, _, status = _paths(1, p.d == 1, p.diffusivity, p.eps, p.dt0, 1.0, math.inf,
                                 math.inf, math.inf, p.horizon, rng)
    if status[0] == HORIZON:
        raise HorizonError(f"path still alive at the horizon {p.horizon}",
                           {"t": float(T[0]), "integral": float(integ[0])})
    return float(T[0]), float(integ[0])


@dataclass(frozen=True)
class FEstimate:
    F: float
    stderr: float
    reps: int
    n_capped: int


def _split_chunk(task):
    seed, index, n, one_dim, s, eps, dt0, c, icap, horizon, nsplit = task
    return _split_functional(n, one_dim, s, eps, dt0, c, icap, horizon, nsplit,
                             replica_rng(seed, index))


def F_eps(p: DiffusionParams, reps: int, seed: int = 0, *, split: bool = True,
          threads: Optional[int] = None) -> FEstimate:
    """Monte Carlo 1 - E exp(-c * integral) with c = ``p.kill_rate_scale``.

    ``reps`` root paths are run.  With ``split`` (the default) a path is
    duplicated, with halved weight, each time it first doubles its distance
    from 0 up to Y = 2; the estimator stays unbiased and the rare large
    excursions that carry F are sampled far more often.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if p.eps == 0:
        return FEstimate(0.0, 0.0, reps, 0)
    nsplit = max(0, int(math.floor(math.log2(2.0 / p.eps)))) if split else 0
    tasks = [
        (seed, i, n, p.d == 1, p.diffusivity, p.eps, p.dt0, p.kill_rate_scale,
         INTEGRAL_CAP, p.horizon, nsplit)
        for i, n in chunks(reps, PATHS_PER_STREAM)
    ]
    parts = map_replicas(_split_chunk, tasks, threads)
    x = np.concatenate([q[0] for q in parts])
    capped = sum(int(q[1]) for q in parts)
    lost = sum(int(q[2]) for q in parts)
    if lost:
        raise HorizonError(f"{lost} paths reached the horizon", {"horizon": p.horizon})
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return FEstimate(float(x.mean()), se, x.size, capped)


@dataclass(frozen=True)
class NuEpsPrediction:
    value: float
    stderr: float
    n: float
    level: float
    kill_rate_scale: float
    F: FEstimate


def nu_epsilon_prediction(
    d: int,
    u2: float,
    eps: float,
    reps: int,
    seed: int = 0,
    *,
    beta: Optional[float] = None,
    dt: Optional[float] = None,
    threads: Optional[int] = None,
) -> NuEpsPrediction:
    """(1/(n eps)) F(eps) with n = 1/h_d(u2) and c = n a_n u2.

    ``level`` = n eps is the family size at which the lattice version of
    this quantity starts its mutation clock.
    """
    n = 1.0 / h_d(d, u2)
    c = n * a_n(d, n) * u2
    p = DiffusionParams(d, eps, beta=beta, dt=dt, kill_rate_scale=c)
    f = F_eps(p, reps, seed, threads=threads)
    scale = 1.0 / (n * eps)
    return NuEpsPrediction(f.F * scale, f.stderr * scale, n, n * eps, c, f)


def gamma1_bvp(x_max: float = 12.0, tol: float = 1e-10) -> float:
    """-v'(0) from a boundary-value solve of v'' = x v, v(0) = 1, v(x_max) = Ai(x_max)/Ai(0).

    An independent route to the d = 1 constant (compare ``analytic.gamma_d(1)``).
    """
    from scipy.integrate import solve_bvp

    from .analytic import v_of_x

    right = v_of_x(1, x_max)
    x = np.linspace(0.0, x_max, 400)
    guess = np.vstack([np.exp(-x), -np.exp(-x)])

    def rhs(xx, v):
        return np.vstack([v[1], xx * v[0]])

    def bc(va, vb):
        return np.array([va[0] - 1.0, vb[0] - right])

    sol = solve_bvp(rhs, bc, x, guess, tol=tol, max_nodes=100_000)
    if not sol.success:
        raise RuntimeError(f"boundary-value solve failed: {sol.message}")
    return -float(sol.sol(0.0)[1])


def gamma_target(d: int, beta: Optional[float] = None) -> float:
    return gamma_d(d, beta)
