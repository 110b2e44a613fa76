"""Stationary waiting-time samples for single-server queues.

Three routes are provided:

* ``lindley_sample``: the Lindley recursion W' = max(W + S - X, 0), run
  from an empty queue with burn-in and thinning. Works for any G/G/1.
* ``geometric_convolution_sample``: the exact M/G/1 stationary law as a
  Geo0(1 - rho) number of iid residual service times. No burn-in.
* ``ladder_decompose``: ascending ladder statistics of the random walk
  with increments S - X, giving (eta, E[Y1], E[Y1^2]) estimates.

Samples are kept per replicate so that distance estimators can report a
spread-based standard error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .distributions import Distribution, Exponential, parse_distribution, residual
from .errors import ConfigurationError, UnsupportedRouteError

SCALINGS = ("raw", "tilde", "hat")

LINDLEY_BURN_IN = 100_000
LINDLEY_THIN = 16
LINDLEY_MAX_THIN = 2000
_CHUNK = 1 << 16


@dataclass(frozen=True)
class QueueSpec:
    interarrival: Distribution
    service: Distribution
    label: str = ""

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ConfigurationError(f"queue {self.label or self.describe()} is not stable: rho={self.rho!r}")

    @classmethod
    def mg1(cls, service: Distribution | str, rho: float, label: str = "") -> "QueueSpec":
        if isinstance(service, str):
            service = parse_distribution(service)
        if not 0.0 < rho < 1.0:
            raise ConfigurationError(f"load must lie in (0, 1), got {rho!r}")
        return cls(Exponential(rho / service.mean), service, label)

    @classmethod
    def with_load(cls, interarrival: Distribution | str, service: Distribution | str,
                  load: float, label: str = "") -> "QueueSpec":
        """Rescale ``interarrival`` so that E[S] / E[X] equals ``load``."""
        if isinstance(interarrival, str):
            interarrival = parse_distribution(interarrival)
        if isinstance(service, str):
            service = parse_distribution(service)
        if not 0.0 < load < 1.0:
            raise ConfigurationError(f"load must lie in (0, 1), got {load!r}")
        target_mean = service.mean / load
        return cls(interarrival.scaled(target_mean / interarrival.mean), service, label)

    @property
    def is_mg1(self) -> bool:
        return isinstance(self.interarrival, Exponential)

    @property
    def arrival_rate(self) -> float:
        return 1.0 / self.interarrival.mean

    @property
    def rho(self) -> float:
        return self.service.mean / self.interarrival.mean

    @property
    def delta(self) -> float:
        """(2E[S]/E[S^2]) (1 - rho)/rho, the M/G/1 heavy-traffic scale."""
        m = self.service.moments()
        return (2.0 * m.m1 / m.m2) * (1.0 - self.rho) / self.rho

    def increment_drift(self) -> float:
        return self.service.mean - self.interarrival.mean

    def increment_var(self) -> float:
        s, x = self.service, self.interarrival
        return (s.moment(2) - s.mean**2) + (x.moment(2) - x.mean**2)

    def describe(self) -> str:
        kind = "M/G/1" if self.is_mg1 else "G/G/1"
        return f"{kind} arrival={self.interarrival} service={self.service} rho={self.rho:.6g}"


@dataclass
class EmpiricalSample:
    """Sorted nonnegative observations plus the per-replicate arrays."""

    replicates: list[np.ndarray]
    route: str
    seed: int
    scaling: str = "raw"
    scale_factor: float = 1.0
    provenance: dict = field(default_factory=dict)
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise ConfigurationError(f"unknown scaling tag {self.scaling!r}")
        self.replicates = [np.sort(np.asarray(r, dtype=float)) for r in self.replicates]
        self.values = np.sort(np.concatenate(self.replicates)) if self.replicates else np.empty(0)
        if self.values.size < 1:
            raise ConfigurationError("an empirical sample needs at least one value")
        if self.values[0] < 0:
            raise ConfigurationError("empirical sample values must be nonnegative")

    @classmethod
    def from_values(cls, values, route: str = "given", seed: int = 0, scaling: str = "raw",
                    replicates: int = 1) -> "EmpiricalSample":
        values = np.asarray(values, dtype=float)
        return cls(list(np.array_split(values, replicates)), route, seed, scaling)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def mean(self) -> float:
        return float(self.values.mean())

    def mean_se(self) -> float:
        return float(self.values.std(ddof=1) / math.sqrt(self.n)) if self.n > 1 else 0.0

    def scaled_by(self, c: float, scaling: str, **provenance) -> "EmpiricalSample":
        prov = dict(self.provenance)
        prov.update(provenance)
        return EmpiricalSample([r * c for r in self.replicates], self.route, self.seed,
                               scaling, self.scale_factor * c, prov)


@dataclass(frozen=True)
class LadderStats:
    eta: float
    eta_se: float
    y1_mean: float
    y1_mean_se: float
    y1_sq_mean: float
    y1_sq_mean_se: float
    y1_cov: float  # covariance of the two sample means (same observations)
    walks: int
    ladder_points: int
    horizon: int
    truncated_fraction: float
    at_risk_fraction: float
    all_heights: bool = False

    @property
    def high_truncation_bias(self) -> bool:
        return self.at_risk_fraction > 0.01

    def tilde_scale(self) -> tuple[float, float]:
        """(1 - eta)/(eta E[Y1]) and its delta-method standard error."""
        c = (1.0 - self.eta) / (self.eta * self.y1_mean)
        dc_deta = -1.0 / (self.eta**2 * self.y1_mean)
        dc_dy = -c / self.y1_mean
        se = math.sqrt((dc_deta * self.eta_se) ** 2 + (dc_dy * self.y1_mean_se) ** 2)
        return c, se


# -- Lindley ------------------------------------------------------------------

def _lindley_chunk(u: np.ndarray, w0: float) -> np.ndarray:
    """W_k for k = 1..len(u) given W_0 = w0.

    W_k = Sigma_k - min(-w0, Sigma_1, ..., Sigma_k), the unrolled form of
    the recursion; equal to it exactly when the minimum is attained at k.
    """
    csum = np.cumsum(u)
    runmin = np.minimum.accumulate(np.minimum(csum, -w0))
    return np.maximum(csum - runmin, 0.0)


def _lindley_chain(q: QueueSpec, n: int, burn_in: int, thin: int, gen: np.random.Generator) -> np.ndarray:
    total = burn_in + n * thin
    out = np.empty(n)
    w = 0.0
    step = 0  # steps taken so far
    filled = 0
    while step < total:
        m = min(_CHUNK, total - step)
        u = q.service.sample(gen, m) - q.interarrival.sample(gen, m)
        path = _lindley_chunk(u, w)
        # record W_k for k = burn_in + j*thin, j >= 1
        k = np.arange(step + 1, step + m + 1)
        keep = (k > burn_in) & ((k - burn_in) % thin == 0)
        got = path[keep]
        out[filled:filled + got.size] = got
        filled += got.size
        w = float(path[-1])
        step += m
    return out


def relaxation_steps(q: QueueSpec) -> int:
    """Var(U) / E[U]^2 for the increment U = S - X, the walk's diffusion time scale."""
    d = q.increment_drift()
    return int(math.ceil(q.increment_var() / (d * d)))


def lindley_sample(q: QueueSpec, n: int, burn_in: int | None = None, thin: int | None = None,
                   seed: int = 0, replicates: int = 1) -> EmpiricalSample:
    """Lindley recursion from an empty queue; independent chains per replicate.

    By default the chain is thinned every ``relaxation_steps(q)`` steps
    (at least 16, at most 2000) and burnt in for 20 of those or 10^5
    steps, whichever is longer, so the retained points are close to
    independent draws from the stationary law.
    """
    relax = relaxation_steps(q)
    if thin is None:
        thin = min(max(relax, LINDLEY_THIN), LINDLEY_MAX_THIN)
    if burn_in is None:
        burn_in = max(LINDLEY_BURN_IN, 20 * relax)
    if n < 1 or burn_in < 0 or thin < 1 or replicates < 1:
        raise ConfigurationError(f"bad Lindley parameters n={n} burn_in={burn_in} thin={thin}")
    sizes = _split(n, replicates)
    reps = [_lindley_chain(q, m, burn_in, thin, rngmod.stream(seed, "simulate.lindley", r))
            for r, m in enumerate(sizes) if m > 0]
    return EmpiricalSample(reps, "lindley", seed, provenance={"burn_in": burn_in, "thin": thin})


# -- exact geometric convolution ----------------------------------------------

def geometric_sums(n_terms: np.ndarray, law: Distribution, gen: np.random.Generator) -> np.ndarray:
    """Sum of ``n_terms[i]`` iid draws of ``law`` for each i; empty sums are exactly 0."""
    out = np.zeros(n_terms.size)
    start = 0
    while start < n_terms.size:
        # bound the number of summands per block to keep memory flat
        csum = np.cumsum(n_terms[start:])
        stop = start + max(1, int(np.searchsorted(csum, _CHUNK * 16, side="right")))
        counts = n_terms[start:stop]
        total = int(counts.sum())
        if total:
            draws = law.sample(gen, total)
            pos = counts > 0
            offsets = np.cumsum(counts) - counts
            out[start:stop][pos] = np.add.reduceat(draws, offsets[pos])
        start = stop
    return out


def geo0(gen: np.random.Generator, p: float, n: int) -> np.ndarray:
    """Geo0(p): pmf p (1-p)^k on k = 0, 1, 2, ..."""
    return gen.geometric(p, n) - 1


def geometric_convolution_sample(q: QueueSpec, n: int, seed: int = 0, replicates: int = 16) -> EmpiricalSample:
    if not q.is_mg1:
        raise UnsupportedRouteError(
            "geometric_convolution_sample needs Poisson arrivals; use lindley_sample for G/G/1")
    if n < 1 or replicates < 1:
        raise ConfigurationError(f"bad sample size n={n}")
    law = residual(q.service)
    reps = []
    for r, m in enumerate(_split(n, replicates)):
        if m == 0:
            continue
        gen = rngmod.stream(seed, "simulate.geometric", r)
        reps.append(geometric_sums(geo0(gen, 1.0 - q.rho, m), law, gen))
    return EmpiricalSample(reps, "geometric", seed)


# -- ladder heights -------------------------------------------------------------

def default_horizon(q: QueueSpec) -> int:
    """Steps after which the walk sits many diffusion lengths below zero."""
    d = -q.increment_drift()
    h = 40.0 * q.increment_var() / (d * d)
    return int(min(max(h, 1000.0), 200_000.0))


def ladder_decompose(q: QueueSpec, walks: int, horizon: int, seed: int = 0,
                     all_heights: bool = False, batch: int = 4096, step_chunk: int = 256) -> LadderStats:
    """Estimate eta, E[Y1], E[Y1^2] from simulated walks Sigma_i = sum (S_j - X_{j+1}).

    By default each walk is stopped at its first ladder epoch, so every
    walk contributes at most one first ladder height. With ``all_heights``
    each walk runs to the horizon and every ladder height is kept; eta is
    then still the fraction of walks with at least one ladder point.

    A walk with no ladder point by ``horizon`` counts as having none. Such
    a walk is "at risk" when its maximum over the last 10% of the horizon
    is within one diffusion length sqrt(Var(U) * horizon/10) of the level
    it would need to exceed.
    """
    if horizon < 1:
        raise ConfigurationError(f"ladder horizon must be >= 1, got {horizon}")
    if walks < 1:
        raise ConfigurationError(f"need at least one walk, got {walks}")
    gen = rngmod.stream(seed, "simulate.ladder", 0)
    window_start = int(math.floor(0.9 * horizon))
    slack = math.sqrt(q.increment_var() * max(horizon - window_start, 1))

    heights: list[np.ndarray] = []
    found_any = 0
    at_risk = 0
    truncated = 0
    for b0 in range(0, walks, batch):
        nb = min(batch, walks - b0)
        pos = np.zeros(nb)
        level = np.zeros(nb)
        found = np.zeros(nb, dtype=bool)
        active = np.ones(nb, dtype=bool)
        late_max = np.full(nb, -np.inf)
        t = 0
        while t < horizon and active.any():
            m = min(step_chunk, horizon - t)
            idx = np.flatnonzero(active)
            k = idx.size
            u = (q.service.sample(gen, k * m) - q.interarrival.sample(gen, k * m)).reshape(k, m)
            path = pos[idx, None] + np.cumsum(u, axis=1)
            prev = np.maximum.accumulate(np.concatenate([level[idx, None], path[:, :-1]], axis=1), axis=1)
            prev = np.maximum(prev, level[idx, None])
            ladder = path > prev
            if all_heights:
                rows, cols = np.nonzero(ladder)
                heights.append((path - prev)[rows, cols])
                hit = ladder.any(axis=1)
                found[idx[hit]] = True
                level[idx] = np.maximum(level[idx], path.max(axis=1))
            else:
                hit = ladder.any(axis=1)
                first = np.argmax(ladder, axis=1)
                hrows = np.flatnonzero(hit)
                heights.append(path[hrows, first[hrows]] - level[idx[hrows]])
                found[idx[hit]] = True
                active[idx[hit]] = False
            # late-window maxima for truncation diagnostics
            steps = np.arange(t + 1, t + m + 1)
            in_window = steps > window_start
            if in_window.any():
                late_max[idx] = np.maximum(late_max[idx], path[:, in_window].max(axis=1))
            pos[idx] = path[:, -1]
            t += m
        if all_heights:
            trunc = np.ones(nb, dtype=bool)
        else:
            trunc = ~found
        truncated += int(trunc.sum())
        at_risk += int((trunc & (late_max >= level - slack)).sum())
        found_any += int(found.sum())

    y = np.concatenate(heights) if heights else np.empty(0)
    eta = found_any / walks
    eta_se = math.sqrt(max(eta * (1 - eta), 0.0) / walks)
    npts = int(y.size)
    if npts:
        y2 = y * y
        y1m, y2m = float(y.mean()), float(y2.mean())
        if npts > 1:
            cov = np.cov(np.vstack([y, y2]), ddof=1) / npts
            y1se, y2se, c12 = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1]), float(cov[0, 1])
        else:
            y1se = y2se = c12 = float("nan")
    else:
        y1m = y2m = y1se = y2se = c12 = float("nan")
    return LadderStats(eta, eta_se, y1m, y1se, y2m, y2se, c12, walks, npts, horizon,
                       truncated / walks, at_risk / walks, all_heights)


# -- rescaling --------------------------------------------------------------------

def scale_factors(q: QueueSpec, ladder: LadderStats | None = None) -> dict[str, float]:
    """Multipliers taking raw W to each scaling."""
    if q.is_mg1 and ladder is None:
        tilde = q.delta
        return {"raw": 1.0, "tilde": tilde, "hat": q.rho * tilde}
    if ladder is None:
        raise ConfigurationError("G/G/1 tilde scaling needs ladder estimates")
    tilde, _ = ladder.tilde_scale()
    return {"raw": 1.0, "tilde": tilde, "hat": ladder.eta * tilde}


def rescale(s: EmpiricalSample, q: QueueSpec, target: str, ladder: LadderStats | None = None) -> EmpiricalSample:
    if target not in SCALINGS:
        raise ConfigurationError(f"unknown target scaling {target!r}")
    if s.scaling not in SCALINGS:
        raise ConfigurationError(f"unknown source scaling {s.scaling!r}")
    f = scale_factors(q, ladder)
    c = f[target] / f[s.scaling]
    prov = {}
    if ladder is not None:
        c_t, c_se = ladder.tilde_scale()
        prov = {"scale_source": "ladder_estimates", "eta": ladder.eta, "eta_se": ladder.eta_se,
                "y1_mean": ladder.y1_mean, "y1_mean_se": ladder.y1_mean_se,
                "tilde_scale": c_t, "tilde_scale_se": c_se}
    return s.scaled_by(c, target, **prov)


def _split(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]
