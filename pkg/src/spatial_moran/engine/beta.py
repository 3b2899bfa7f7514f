"""Monte Carlo estimate of the d = 3 escape constant.

beta_3 is the probability that a simple random walk on Z^3 started at e1
never visits the origin (the difference of two independent walks started
at 0 and e1).  Walks are run for ``walk_steps`` steps; a survivor at X_T
will still hit 0 later with probability ~ G(X_T)/G(0), where
G(x) ~ 3/(2 pi |x|) and G(0) = 1/beta.  Writing c = 3/(2 pi |X_T|) for
survivors gives beta = E[s (1 - beta c)], i.e. beta = S / (1 + C) with
S = E[s] and C = E[s c].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from ..streams import chunks, map_replicas, replica_rng

WALKS_PER_STREAM = 20_000


@njit(cache=True)
def _walks(n, steps, rng):
    survived = np.zeros(n, np.bool_)
    radius = np.zeros(n)
    for w in range(n):
        x = 1
        y = 0
        z = 0
        alive = True
        for _ in range(steps):
            k = int(rng.random() * 6)
            if k == 0:
                x -= 1
            elif k == 1:
                x += 1
            elif k == 2:
                y -= 1
            elif k == 3:
                y += 1
            elif k == 4:
                z -= 1
            else:
                z += 1
            if x == 0 and y == 0 and z == 0:
                alive = False
                break
        survived[w] = alive
        radius[w] = math.sqrt(x * x + y * y + z * z)
    return survived, radius


def _chunk(task):
    seed, index, n, steps = task
    return _walks(n, steps, replica_rng(seed, index))


@dataclass
class BetaEstimate:
    beta: float
    stderr: float
    raw_survival: float
    reps: int
    walk_steps: int


def estimate_beta(
    d: int = 3,
    walk_steps: int = 2000,
    reps: int = 100_000,
    seed: int = 0,
    threads: Optional[int] = None,
) -> BetaEstimate:
    if d != 3:
        raise ValueError("estimate_beta is defined for d = 3 only")
    if reps < 2:
        raise ValueError("need at least two walks")
    if walk_steps < 1:
        raise ValueError("walk_steps must be >= 1")
    tasks = [(seed, i, n, walk_steps) for i, n in chunks(reps, WALKS_PER_STREAM)]
    parts = map_replicas(_chunk, tasks, threads)
    s = np.concatenate([p[0] for p in parts]).astype(float)
    r = np.concatenate([p[1] for p in parts])
    c = np.where(s > 0, 3.0 / (2.0 * math.pi * np.maximum(r, 1.0)), 0.0)
    S, Cm = s.mean(), c.mean()
    beta = S / (1.0 + Cm)
    # delta method for S / (1 + C)
    grad = np.array([1.0 / (1.0 + Cm), -S / (1.0 + Cm) ** 2])
    cov = np.cov(np.vstack([s, c])) / s.size
    se = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return BetaEstimate(float(beta), se, float(S), int(reps), int(walk_steps))
