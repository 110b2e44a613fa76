"""Nonnegative parametric laws with exact moments.

Six families are supported: exponential, deterministic, erlang, uniform,
hyperexponential and lognormal. Every family has closed-form raw moments of
all orders, so the constants appearing in the heavy-traffic bounds are exact.

Each law also knows its stop-loss transform ``E[(S - x)^+]``. That single
function gives the survival integral needed by the Wasserstein estimator and
the CDF of the stationary-excess (residual) law.

Families are written in config files as ``family:p1,p2,...``::

    exp:1.0            rate
    det:1.0            point mass
    erlang:2,3.0       shape k, rate
    uniform:0,2        lower, upper
    hyperexp:0.5,2,0.5,0.667   weight, rate pairs
    lognormal:0,0.5    log-mean, log-sd
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import ConfigurationError

_REL_SLACK = 1e-12


@dataclass(frozen=True)
class MomentTriple:
    m1: float
    m2: float
    m3: float

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 > 0 and self.m3 > 0):
            raise ConfigurationError(f"moments must be positive, got {self}")
        if not all(math.isfinite(v) for v in (self.m1, self.m2, self.m3)):
            raise ConfigurationError(f"moments must be finite, got {self}")
        if self.m2 < self.m1**2 * (1 - _REL_SLACK):
            raise ConfigurationError(f"m2 < m1^2 violates Cauchy-Schwarz: {self}")
        if self.m3 * self.m1 < self.m2**2 * (1 - _REL_SLACK):
            raise ConfigurationError(f"m3*m1 < m2^2 violates the power-mean inequality: {self}")

    @property
    def bound_constant(self) -> float:
        """4 E[S^3] E[S] / (3 E[S^2]^2), the leading constant of the M/G/1 bound."""
        return 4.0 * self.m3 * self.m1 / (3.0 * self.m2**2)


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


class Distribution:
    """Base class. Subclasses are frozen dataclasses."""

    family: str = ""

    # -- moments -----------------------------------------------------------
    def moment(self, k: int) -> float:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return self.moment(1)

    def moments(self) -> MomentTriple:
        return MomentTriple(self.moment(1), self.moment(2), self.moment(3))

    # -- distribution functions --------------------------------------------
    def cdf(self, x):
        return 1.0 - self.sf(x)

    def sf(self, x):
        raise NotImplementedError

    def stop_loss(self, x):
        """E[(S - x)^+] = integral of the survival function over (x, inf)."""
        raise NotImplementedError

    def ppf(self, u):
        return _ppf_bisect(self, u)

    def upper_tail(self, eps: float = 1e-15) -> float:
        """A point beyond which the survival function is below ``eps``."""
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Points where the CDF jumps or has a kink."""
        return ()

    def cf(self, t):
        """Characteristic function E[exp(itS)], or None if not closed form."""
        return None

    @property
    def has_cf(self) -> bool:
        return self.cf(0.0) is not None

    # -- sampling ----------------------------------------------------------
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_size_biased(self, rng: np.random.Generator, n: int, order: int = 1) -> np.ndarray:
        """Draws from s^order dF(s) / E[S^order]."""
        raise NotImplementedError

    # -- transforms ----------------------------------------------------------
    def scaled(self, c: float) -> "Distribution":
        """Law of c*S."""
        raise NotImplementedError

    def to_string(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_string()


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ConfigurationError(f"{name} must be a positive finite number, got {value!r}")
    return value


def _ppf_bisect(d: Distribution, u, iters: int = 100):
    u = np.asarray(u, dtype=float)
    lo = np.zeros_like(u)
    hi = np.full_like(u, d.upper_tail(1e-16))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = d.cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float = 1.0
    family = "exp"

    def __post_init__(self):
        object.__setattr__(self, "rate", _positive("exp rate", self.rate))

    def moment(self, k):
        return math.factorial(k) / self.rate**k

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def stop_loss(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, self.mean - x, np.exp(-self.rate * np.maximum(x, 0.0)) / self.rate)

    def ppf(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def upper_tail(self, eps=1e-15):
        return -math.log(eps) / self.rate

    def cf(self, t):
        return self.rate / (self.rate - 1j * np.asarray(t, dtype=float))

    def sample(self, rng, n):
        return -np.log1p(-rng.random(n)) / self.rate

    def sample_size_biased(self, rng, n, order=1):
        return rng.gamma(1.0 + order, 1.0 / self.rate, n)

    def scaled(self, c):
        return Exponential(self.rate / _positive("scale", c))

    def to_string(self):
        return f"exp:{_fmt(self.rate)}"


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float = 1.0
    family = "det"

    def __post_init__(self):
        object.__setattr__(self, "value", _positive("det value", self.value))

    def moment(self, k):
        return self.value**k

    def sf(self, x):
        return np.where(np.asarray(x, dtype=float) < self.value, 1.0, 0.0)

    def stop_loss(self, x):
        return np.maximum(self.value - np.asarray(x, dtype=float), 0.0)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u > 0, self.value, 0.0)

    def upper_tail(self, eps=1e-15):
        return self.value

    def breakpoints(self):
        return (self.value,)

    def cf(self, t):
        return np.exp(1j * np.asarray(t, dtype=float) * self.value)

    def sample(self, rng, n):
        return np.full(n, self.value)

    def sample_size_biased(self, rng, n, order=1):
        return np.full(n, self.value)

    def scaled(self, c):
        return Deterministic(self.value * _positive("scale", c))

    def to_string(self):
        return f"det:{_fmt(self.value)}"


@dataclass(frozen=True)
class Erlang(Distribution):
    k: int = 1
    rate: float = 1.0
    family = "erlang"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"erlang shape must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "rate", _positive("erlang rate", self.rate))

    def moment(self, j):
        return math.exp(special.gammaln(self.k + j) - special.gammaln(self.k)) / self.rate**j

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 1.0, special.gammaincc(self.k, self.rate * np.maximum(x, 0.0)))

    def stop_loss(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        tail_mean = self.mean * special.gammaincc(self.k + 1, self.rate * xp)
        return np.where(x < 0, self.mean - x, tail_mean - xp * special.gammaincc(self.k, self.rate * xp))

    def ppf(self, u):
        return special.gammaincinv(self.k, np.asarray(u, dtype=float)) / self.rate

    def upper_tail(self, eps=1e-15):
        return float(special.gammainccinv(self.k, eps)) / self.rate

    def cf(self, t):
        return (self.rate / (self.rate - 1j * np.asarray(t, dtype=float))) ** self.k

    def sample(self, rng, n):
        return rng.gamma(self.k, 1.0 / self.rate, n)

    def sample_size_biased(self, rng, n, order=1):
        return rng.gamma(self.k + order, 1.0 / self.rate, n)

    def scaled(self, c):
        return Erlang(self.k, self.rate / _positive("scale", c))

    def to_string(self):
        return f"erlang:{self.k},{_fmt(self.rate)}"


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float = 0.0
    high: float = 1.0
    family = "uniform"

    def __post_init__(self):
        low, high = float(self.low), float(self.high)
        if not (0.0 <= low < high and math.isfinite(high)):
            raise ConfigurationError(f"uniform needs 0 <= low < high, got ({low!r}, {high!r})")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    def moment(self, k):
        a, b = self.low, self.high
        return (b ** (k + 1) - a ** (k + 1)) / ((k + 1) * (b - a))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((self.high - x) / (self.high - self.low), 0.0, 1.0)

    def stop_loss(self, x):
        a, b = self.low, self.high
        x = np.asarray(x, dtype=float)
        inside = (b - np.clip(x, a, b)) ** 2 / (2 * (b - a))
        return np.where(x <= a, 0.5 * (a + b) - x, inside)

    def ppf(self, u):
        return self.low + np.asarray(u, dtype=float) * (self.high - self.low)

    def upper_tail(self, eps=1e-15):
        return self.high

    def breakpoints(self):
        return (self.low, self.high) if self.low > 0 else (self.high,)

    def cf(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.low, self.high
        safe = np.where(t == 0, 1.0, t)
        val = (np.exp(1j * safe * b) - np.exp(1j * safe * a)) / (1j * safe * (b - a))
        return np.where(t == 0, 1.0 + 0j, val)

    def sample(self, rng, n):
        return self.low + rng.random(n) * (self.high - self.low)

    def sample_size_biased(self, rng, n, order=1):
        p = order + 1
        a, b = self.low, self.high
        return (a**p + rng.random(n) * (b**p - a**p)) ** (1.0 / p)

    def scaled(self, c):
        c = _positive("scale", c)
        return Uniform(self.low * c, self.high * c)

    def to_string(self):
        return f"uniform:{_fmt(self.low)},{_fmt(self.high)}"


@dataclass(frozen=True)
class HyperExponential(Distribution):
    probs: tuple = (1.0,)
    rates: tuple = (1.0,)
    family = "hyperexp"

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        rates = tuple(_positive("hyperexp rate", r) for r in self.rates)
        if len(probs) != len(rates) or not probs:
            raise ConfigurationError("hyperexp needs matching weight and rate lists")
        if any(p <= 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigurationError(f"hyperexp weights must be positive and sum to 1, got {probs}")
        total = sum(probs)
        object.__setattr__(self, "probs", tuple(p / total for p in probs))
        object.__setattr__(self, "rates", rates)

    def _arrays(self):
        return np.array(self.probs), np.array(self.rates)

    def moment(self, k):
        return math.factorial(k) * sum(p / r**k for p, r in zip(self.probs, self.rates))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)[..., None]
        p, r = self._arrays()
        return np.where(x < 0, 1.0, (p * np.exp(-r * xp)).sum(axis=-1))

    def stop_loss(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)[..., None]
        p, r = self._arrays()
        return np.where(x < 0, self.mean - x, (p * np.exp(-r * xp) / r).sum(axis=-1))

    def upper_tail(self, eps=1e-15):
        return max(math.log(p / eps) / r for p, r in zip(self.probs, self.rates))

    def cf(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        p, r = self._arrays()
        return (p * r / (r - 1j * t)).sum(axis=-1)

    def _mixture_sample(self, rng, n, order):
        p, r = self._arrays()
        w = p * np.array([math.factorial(order) / ri**order for ri in r])
        w = w / w.sum()
        comp = rng.choice(len(p), size=n, p=w)
        return rng.gamma(1.0 + order, 1.0, n) / r[comp]

    def sample(self, rng, n):
        p, r = self._arrays()
        comp = rng.choice(len(p), size=n, p=p)
        return -np.log1p(-rng.random(n)) / r[comp]

    def sample_size_biased(self, rng, n, order=1):
        return self._mixture_sample(rng, n, order)

    def scaled(self, c):
        c = _positive("scale", c)
        return HyperExponential(self.probs, tuple(r / c for r in self.rates))

    def to_string(self):
        body = ",".join(f"{_fmt(p)},{_fmt(r)}" for p, r in zip(self.probs, self.rates))
        return f"hyperexp:{body}"


@dataclass(frozen=True)
class LogNormal(Distribution):
    mu: float = 0.0
    sigma: float = 1.0
    family = "lognormal"

    def __post_init__(self):
        mu = float(self.mu)
        if not math.isfinite(mu):
            raise ConfigurationError(f"lognormal mu must be finite, got {mu!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", _positive("lognormal sigma", self.sigma))

    def moment(self, k):
        return math.exp(k * self.mu + 0.5 * k * k * self.sigma**2)

    def _z(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (np.log(np.maximum(x, 0.0)) - self.mu) / self.sigma

    def sf(self, x):
        return special.ndtr(-self._z(x))

    def stop_loss(self, x):
        x = np.asarray(x, dtype=float)
        z = self._z(x)
        tail_mean = self.mean * special.ndtr(self.sigma - z)
        return np.where(x <= 0, self.mean - x, tail_mean - np.maximum(x, 0.0) * special.ndtr(-z))

    def ppf(self, u):
        return np.exp(self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float)))

    def upper_tail(self, eps=1e-15):
        return math.exp(self.mu - self.sigma * float(special.ndtri(eps)))

    def sample(self, rng, n):
        return np.exp(self.mu + self.sigma * rng.standard_normal(n))

    def sample_size_biased(self, rng, n, order=1):
        return np.exp(self.mu + order * self.sigma**2 + self.sigma * rng.standard_normal(n))

    def scaled(self, c):
        return LogNormal(self.mu + math.log(_positive("scale", c)), self.sigma)

    def to_string(self):
        return f"lognormal:{_fmt(self.mu)},{_fmt(self.sigma)}"


@dataclass(frozen=True)
class Equilibrium(Distribution):
    """Stationary-excess law of ``base``: density (1 - F(x)) / E[S].

    Sampling uses the product U * S^s. Size-biasing this law to order j
    is again closed form: S^(j+1) * U^(1/(j+1)), since x^j (1 - F(x)) is
    the mixture over s of x^j on [0, s] weighted by dF(s).
    """

    base: Distribution = field(default_factory=Exponential)
    family = "equilibrium"

    def moment(self, k):
        return self.base.moment(k + 1) / ((k + 1) * self.base.mean)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 1.0, self.base.stop_loss(np.maximum(x, 0.0)) / self.base.mean)

    def stop_loss(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        out = np.empty_like(flat)
        upper = self.upper_tail(1e-300)
        pts = self.base.breakpoints()
        for i, xi in enumerate(flat):
            lo = max(xi, 0.0)
            inner = [p for p in pts if lo < p < upper]
            val, _ = integrate.quad(lambda t: float(self.sf(t)), lo, upper, points=inner or None,
                                    epsabs=1e-13, epsrel=1e-12, limit=200)
            out[i] = val + max(-xi, 0.0)
        return out.reshape(x.shape) if x.shape else float(out[0])

    def upper_tail(self, eps=1e-15):
        x = self.base.upper_tail(min(eps, 1e-15))
        while float(self.sf(x)) > eps:
            x *= 2.0
        return x

    def breakpoints(self):
        return tuple(p for p in self.base.breakpoints() if p > 0)

    def cf(self, t):
        inner = self.base.cf(t)
        if inner is None:
            return None
        t = np.asarray(t, dtype=float)
        safe = np.where(t == 0, 1.0, t)
        val = (self.base.cf(safe) - 1.0) / (1j * safe * self.base.mean)
        return np.where(t == 0, 1.0 + 0j, val)

    def sample(self, rng, n):
        return rng.random(n) * self.base.sample_size_biased(rng, n, 1)

    def sample_size_biased(self, rng, n, order=1):
        s = self.base.sample_size_biased(rng, n, order + 1)
        return s * rng.random(n) ** (1.0 / (order + 1))

    def scaled(self, c):
        return Equilibrium(self.base.scaled(c))

    def to_string(self):
        return f"equilibrium({self.base.to_string()})"


# -- public operations -------------------------------------------------------

def moments(d: Distribution) -> MomentTriple:
    """Exact raw moments E[S], E[S^2], E[S^3]."""
    return d.moments()


def residual(d: Distribution) -> Distribution:
    """Stationary-excess law of ``d``, closed form within the families where possible.

    Exponential laws are their own excess law, a point mass at c becomes
    Uniform(0, c), and a hyperexponential stays hyperexponential with
    weights reweighted by component means. Everything else is wrapped.
    """
    m = d.moments()  # validates finiteness
    del m
    if isinstance(d, Exponential):
        return Exponential(d.rate)
    if isinstance(d, Deterministic):
        return Uniform(0.0, d.value)
    if isinstance(d, HyperExponential):
        w = [p / r for p, r in zip(d.probs, d.rates)]
        total = sum(w)
        return HyperExponential(tuple(x / total for x in w), d.rates)
    return Equilibrium(d)


_ALIASES = {
    "exp": "exp", "exponential": "exp", "m": "exp",
    "det": "det", "deterministic": "det", "d": "det",
    "erlang": "erlang", "erl": "erlang",
    "uniform": "uniform", "unif": "uniform",
    "hyperexp": "hyperexp", "hyperexponential": "hyperexp", "h": "hyperexp",
    "lognormal": "lognormal", "lognorm": "lognormal",
}

_ARITY = {"exp": 1, "det": 1, "erlang": 2, "uniform": 2, "lognormal": 2}


def parse_distribution(text: str) -> Distribution:
    """Parse ``family:p1,p2,...``; errors name the offending token."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigurationError(f"empty distribution string {text!r}")
    head, sep, tail = text.strip().partition(":")
    name = _ALIASES.get(head.strip().lower())
    if name is None:
        raise ConfigurationError(f"unknown distribution family {head.strip()!r} in {text!r}")
    if not sep or not tail.strip():
        raise ConfigurationError(f"missing parameters after {head.strip()!r} in {text!r}")
    values = []
    for tok in tail.split(","):
        try:
            values.append(float(tok))
        except ValueError:
            raise ConfigurationError(f"bad parameter token {tok.strip()!r} in {text!r}") from None
    if name in _ARITY and len(values) != _ARITY[name]:
        raise ConfigurationError(
            f"{name} takes {_ARITY[name]} parameter(s), got {len(values)} in {text!r}")
    if name == "exp":
        return Exponential(values[0])
    if name == "det":
        return Deterministic(values[0])
    if name == "erlang":
        if not values[0].is_integer():
            raise ConfigurationError(f"bad parameter token {tail.split(',')[0].strip()!r} in {text!r}: "
                                     "erlang shape must be an integer")
        return Erlang(int(values[0]), values[1])
    if name == "uniform":
        return Uniform(values[0], values[1])
    if name == "lognormal":
        return LogNormal(values[0], values[1])
    if len(values) % 2 or not values:
        raise ConfigurationError(f"hyperexp takes weight,rate pairs, got {len(values)} values in {text!r}")
    return HyperExponential(tuple(values[0::2]), tuple(values[1::2]))
