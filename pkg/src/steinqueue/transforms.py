"""Size-bias and equilibrium transforms, and the equilibrium coupling of a
geometric convolution.

For W = c * (X_1 + ... + X_N) with N ~ Geo0(p), c = p / (mu (1 - p)), the
pair

    w   = c * (X_1 + ... + X_N)
    w_e = w + c * X^e

has w_e distributed as the equilibrium law of w. The partial sum is shared,
so the gap is exactly c * X^e.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .distributions import Distribution
from .errors import ConfigurationError
from .simulate import EmpiricalSample, _split, geo0, geometric_sums


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


@dataclass
class CoupledPair:
    w: np.ndarray
    w_e: np.ndarray
    seed: int
    p: float | None = None
    scale: float | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.w_e = np.asarray(self.w_e, dtype=float)
        if self.w.shape != self.w_e.shape or self.w.ndim != 1:
            raise ConfigurationError("coupled coordinates must be 1-d arrays of equal length")
        if self.w.size < 1:
            raise ConfigurationError("empty coupling")
        if (self.w < 0).any() or (self.w_e < 0).any():
            raise ConfigurationError("coupled values must be nonnegative")

    @classmethod
    def identity(cls, values, seed: int = 0) -> "CoupledPair":
        v = np.asarray(values, dtype=float)
        return cls(v, v.copy(), seed)

    @property
    def n(self) -> int:
        return int(self.w.size)

    def first_marginal(self) -> EmpiricalSample:
        return EmpiricalSample([self.w], "coupling", self.seed, scaling="tilde")


def size_bias_sample(d: Distribution, n: int, seed: int = 0) -> EmpiricalSample:
    """Draws from x dF(x) / E[X]."""
    gen = rngmod.stream(seed, "transforms.size_bias")
    return EmpiricalSample([d.sample_size_biased(gen, n, 1)], "size_bias", seed)


def _equilibrium_draws(d: Distribution, gen: np.random.Generator, n: int) -> np.ndarray:
    s = d.sample_size_biased(gen, n, 1)
    return gen.random(n) * s


def equilibrium_sample(d: Distribution, n: int, seed: int = 0) -> EmpiricalSample:
    """Draws of U * X^s with U uniform on (0, 1) independent of the size-biased X^s."""
    gen = rngmod.stream(seed, "transforms.equilibrium")
    return EmpiricalSample([_equilibrium_draws(d, gen, n)], "equilibrium", seed)


def couple_geometric(p: float, x_law: Distribution, n: int, seed: int = 0, replicates: int = 16) -> CoupledPair:
    if not 0.0 < p < 1.0:
        raise ConfigurationError(f"geometric parameter must lie in (0, 1), got {p!r}")
    mu = x_law.mean
    c = p / (mu * (1.0 - p))
    ws, wes = [], []
    for r, m in enumerate(_split(n, replicates)):
        if m == 0:
            continue
        gen = rngmod.stream(seed, "transforms.couple", r)
        partial = geometric_sums(geo0(gen, p, m), x_law, gen)
        xe = _equilibrium_draws(x_law, gen, m)
        w = c * partial
        ws.append(w)
        wes.append(w + c * xe)
    return CoupledPair(np.concatenate(ws), np.concatenate(wes), seed, p, c)


def coupling_gap_bound(pair: CoupledPair) -> Estimate:
    """2 E|W - W^e| with its standard error."""
    gap = np.abs(pair.w - pair.w_e)
    se = 2.0 * gap.std(ddof=1) / math.sqrt(pair.n) if pair.n > 1 else 0.0
    return Estimate(2.0 * float(gap.mean()), float(se))


def expected_gap(p: float, x_law: Distribution) -> float:
    """E[w_e - w] = (p / (mu (1 - p))) * mu2 / (2 mu)."""
    mu, mu2 = x_law.mean, x_law.moment(2)
    return p / (mu * (1.0 - p)) * mu2 / (2.0 * mu)


# test functions for the defining relation E f'(W) - f'(0) = E[W] E f''(W^e)
RELATION_BANK = {
    "x^2/2": (lambda x: x, lambda x: np.ones_like(x)),
    "x^3/6": (lambda x: 0.5 * x * x, lambda x: x),
    "1-exp(-x)": (lambda x: np.exp(-x), lambda x: -np.exp(-x)),
}


def defining_relation(pair: CoupledPair, fprime, fsecond) -> Estimate:
    """E[f'(W)] - f'(0) - E[W] E[f''(W^e)] with a delta-method standard error."""
    a = fprime(pair.w)
    b = fsecond(pair.w_e)
    mw, mb = float(pair.w.mean()), float(b.mean())
    value = float(a.mean()) - float(fprime(np.zeros(1))[0]) - mw * mb
    infl = a - mb * pair.w - mw * b
    se = float(infl.std(ddof=1) / math.sqrt(pair.n)) if pair.n > 1 else 0.0
    return Estimate(value, se)
