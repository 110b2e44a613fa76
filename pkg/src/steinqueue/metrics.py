"""Wasserstein and Kolmogorov distances between samples and laws.

The sample-vs-law Wasserstein distance is computed exactly: the empirical
CDF is a step function, and on each step the integral of |F_n - G| is split
at the point where G crosses the step level and evaluated through the law's
stop-loss transform. There is no binning and no inner Monte Carlo.

Standard errors are the spread of the per-replicate estimates divided by
sqrt(#replicates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Distribution, Exponential
from .errors import ConfigurationError
from .simulate import EmpiricalSample

EXP1 = Exponential(1.0)


@dataclass(frozen=True)
class DistanceEstimate:
    metric: str
    estimate: float
    se: float
    n: int
    route: str

    def __post_init__(self):
        if self.metric not in ("W", "K"):
            raise ConfigurationError(f"metric must be 'W' or 'K', got {self.metric!r}")


def _sorted_values(s) -> np.ndarray:
    if isinstance(s, EmpiricalSample):
        return s.values
    x = np.asarray(s, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ConfigurationError("expected a nonempty 1-d sample")
    if np.any(np.diff(x) < 0):
        raise ConfigurationError("sample must be sorted ascending")
    return x


def _replicates(s) -> list[np.ndarray]:
    return s.replicates if isinstance(s, EmpiricalSample) else [_sorted_values(s)]


def _route(s) -> str:
    return s.route if isinstance(s, EmpiricalSample) else "array"


def _spread_se(values: list[float]) -> float:
    if len(values) < 2:
        return float("nan")
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


# -- Wasserstein -------------------------------------------------------------

def w1_sorted_vs_law(x: np.ndarray, law: Distribution) -> float:
    """Integral over [0, inf) of |F_n - G| for sorted ``x``."""
    n = x.size
    if x[0] < 0:
        raise ConfigurationError("samples must be nonnegative")
    a = np.concatenate([[0.0], x[:-1]])  # interval starts, level i/n for i = 0..n-1
    b = x
    c = np.arange(n) / n
    with np.errstate(divide="ignore"):
        q = np.where(c > 0, law.ppf(c), 0.0)
    qc = np.clip(q, a, b)
    pa, pq, pb = law.stop_loss(a), law.stop_loss(qc), law.stop_loss(b)
    below = (pa - pq) - (1.0 - c) * (qc - a)  # G < c on [a, q]
    above = (1.0 - c) * (b - qc) - (pq - pb)  # G > c on [q, b]
    tail = float(law.stop_loss(x[-1]))  # level 1 on [x_(n), inf)
    return float(np.sum(below + above)) + tail


def wasserstein_vs_cdf(s, law: Distribution = EXP1) -> DistanceEstimate:
    x = _sorted_values(s)
    est = w1_sorted_vs_law(x, law)
    reps = _replicates(s)
    se = _spread_se([w1_sorted_vs_law(r, law) for r in reps]) if len(reps) > 1 else float("nan")
    return DistanceEstimate("W", est, se, int(x.size), _route(s))


def wasserstein_two_samples(a, b) -> DistanceEstimate:
    xa, xb = _sorted_values(a), _sorted_values(b)
    if xa.size != xb.size:
        raise ConfigurationError(f"two-sample Wasserstein needs equal sizes, got {xa.size} and {xb.size}")
    est = float(np.mean(np.abs(xa - xb)))
    ra, rb = _replicates(a), _replicates(b)
    se = float("nan")
    if len(ra) > 1 and len(ra) == len(rb) and all(u.size == v.size for u, v in zip(ra, rb)):
        se = _spread_se([float(np.mean(np.abs(u - v))) for u, v in zip(ra, rb)])
    return DistanceEstimate("W", est, se, int(xa.size), f"{_route(a)}|{_route(b)}")


# -- Kolmogorov ----------------------------------------------------------------

def ks_sorted_vs_law(x: np.ndarray, law: Distribution) -> float:
    n = x.size
    g = law.cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - g)), np.max(np.abs((i - 1) / n - g))))


def kolmogorov_vs_cdf(s, law: Distribution = EXP1) -> DistanceEstimate:
    """sup |F_n - G| for a continuous law G."""
    x = _sorted_values(s)
    est = ks_sorted_vs_law(x, law)
    reps = _replicates(s)
    se = _spread_se([ks_sorted_vs_law(r, law) for r in reps]) if len(reps) > 1 else float("nan")
    return DistanceEstimate("K", est, se, int(x.size), _route(s))


def kolmogorov_two_samples(a, b) -> float:
    xa, xb = _sorted_values(a), _sorted_values(b)
    grid = np.concatenate([xa, xb])
    fa = np.searchsorted(xa, grid, side="right") / xa.size
    fb = np.searchsorted(xb, grid, side="right") / xb.size
    return float(np.max(np.abs(fa - fb)))


def exact_wasserstein_scaled_exp(rho: float) -> float:
    """d_W(rho Z, Z) for Z ~ Exp(1)."""
    if not 0.0 < rho <= 1.0:
        raise ConfigurationError(f"rho must lie in (0, 1], got {rho!r}")
    return 1.0 - rho
