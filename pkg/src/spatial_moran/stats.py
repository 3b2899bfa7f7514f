"""Interval estimates, an exponential goodness-of-fit test and power-law slopes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Iterable, Sequence, Tuple

import numpy as np

KOLMOGOROV_TERMS = 100


@dataclass(frozen=True)
class TestReport:
    statistic: float
    p_value: float
    n: int
    target: str

    __test__ = False  # not a pytest class


def kolmogorov_sf(x: float) -> float:
    """P(K > x) for the Kolmogorov distribution.

    The alternating series converges slowly for small x, where the
    equivalent theta-function form is used instead.
    """
    if x <= 0:
        return 1.0
    if x < 1.0:
        s = 0.0
        for k in range(1, KOLMOGOROV_TERMS + 1):
            s += math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * x * x))
        return min(1.0, max(0.0, 1.0 - math.sqrt(2 * math.pi) / x * s))
    s = 0.0
    for k in range(1, KOLMOGOROV_TERMS + 1):
        s += (-1) ** (k - 1) * math.exp(-2.0 * k * k * x * x)
    return min(1.0, max(0.0, 2.0 * s))


def ks_exponential(samples: Iterable[float], rate: float) -> TestReport:
    """One-sample KS test of ``samples`` against Exp(rate).

    The p-value is asymptotic, with Stephens' finite-n adjustment of the
    scaled statistic.
    """
    x = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples,
                           dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("samples must be nonempty")
    if not rate > 0:
        raise ValueError("rate must be positive")
    if np.any(~(x > 0)):
        raise ValueError("samples must be positive")
    cdf = -np.expm1(-rate * x)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    sn = math.sqrt(n)
    p = kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
    return TestReport(d, p, n, f"exponential(rate={rate:g})")


def mean_ci(samples: Sequence[float], level: float = 0.95) -> Tuple[float, float]:
    """Mean and normal-approximation half width z * s / sqrt(n)."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two samples")
    z = NormalDist().inv_cdf(0.5 + level / 2)
    return float(x.mean()), z * float(x.std(ddof=1)) / math.sqrt(x.size)


def loglog_slope(pairs: Iterable[Tuple[float, float]]) -> float:
    """Least-squares slope of log y against log x."""
    pts = np.asarray(list(pairs), dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise ValueError("need at least two (x, y) pairs")
    if np.any(pts <= 0):
        raise ValueError("coordinates must be positive")
    return float(np.polyfit(np.log(pts[:, 0]), np.log(pts[:, 1]), 1)[0])
