"""Bound calculators, measured-vs-bound verdicts, and the rate analysis.

Verdicts allow a 3 standard-error slack: a bound counts as violated only
when the measured distance is past it by more than 3 s.e.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from . import metrics, simulate, transforms
from .distributions import Distribution, MomentTriple, residual
from .errors import ConfigurationError, NumericalError
from .simulate import LadderStats, QueueSpec

SLACK = 3.0


@dataclass(frozen=True)
class MG1Bounds:
    tilde_upper: float
    hat_lower: float
    hat_upper: float


def bound_mg1(m: MomentTriple, rho: float) -> MG1Bounds:
    if not 0.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho!r}")
    # the W-tilde bound is the geometric-convolution bound at the residual-service parameters
    tilde = bound_geo(*mg1_geo_parameters(m, rho))
    const = m.bound_constant
    return MG1Bounds(tilde, 1.0 - rho, (1.0 + const) * (1.0 - rho))


def bound_geo(p: float, mu: float, mu2: float) -> float:
    """p mu2 / ((1 - p) mu^2) for a Geo0(p) convolution normalised to mean one."""
    if not 0.0 < p < 1.0:
        raise ConfigurationError(f"p must lie in (0, 1), got {p!r}")
    if mu <= 0 or mu2 < mu * mu * (1 - 1e-12):
        raise ConfigurationError(f"need mu > 0 and mu2 >= mu^2, got mu={mu!r} mu2={mu2!r}")
    return p * mu2 / ((1.0 - p) * mu**2)


def mg1_geo_parameters(m: MomentTriple, rho: float) -> tuple[float, float, float]:
    """(p, mu, mu2) of the residual-service geometric convolution."""
    return 1.0 - rho, m.m2 / (2.0 * m.m1), m.m3 / (3.0 * m.m1)


@dataclass(frozen=True)
class BrownCeiling:
    exact_ceiling: float
    linear_ceiling: float


def bound_brown_kolmogorov(eta: float, mu: float, mu2: float) -> BrownCeiling:
    if not 0.0 < eta <= 1.0:
        raise ConfigurationError(f"eta must lie in (0, 1], got {eta!r}")
    x = mu2 / (2.0 * mu**2) * (1.0 - eta) / eta
    return BrownCeiling(-math.expm1(-x), x)


def atom_exp_distance(rho: float) -> float:
    """int_0^inf |rho e^{-rho x} - e^{-x}| dx, by quadrature split at the crossing.

    This is d_W between Exp(1) and the law with an atom 1 - rho at zero and
    an Exp(rho) part, which is the tilde-scaled M/M/1 wait (and the G/M/1
    wait with rho replaced by the root sigma).
    """
    if not 0.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (0, 1), got {rho!r}")
    cross = -math.log(rho) / (1.0 - rho)
    f = lambda x: abs(rho * math.exp(-rho * x) - math.exp(-x))  # noqa: E731
    a, ea = integrate.quad(f, 0.0, cross, epsabs=1e-14, epsrel=1e-13)
    b, eb = integrate.quad(f, cross, np.inf, epsabs=1e-14, epsrel=1e-13)
    if ea + eb > 1e-11:
        raise NumericalError("exact M/M/1 distance quadrature did not converge", error=ea + eb)
    return a + b


def mm1_tilde_distance(rho: float) -> float:
    return atom_exp_distance(rho)


# -- reports ----------------------------------------------------------------

@dataclass
class Verdict:
    name: str
    measured: float
    bound: float
    se: float
    kind: str  # "upper" (measured <= bound + 3se) or "lower" (measured >= bound - 3se) or "match"
    passed: bool


def _upper(name, measured, bound, se):
    se = 0.0 if not math.isfinite(se) else se
    return Verdict(name, measured, bound, se, "upper", bool(measured <= bound + SLACK * se))


def _lower(name, measured, bound, se):
    se = 0.0 if not math.isfinite(se) else se
    return Verdict(name, measured, bound, se, "lower", bool(measured >= bound - SLACK * se))


def _match(name, measured, target, se):
    se = 0.0 if not math.isfinite(se) else se
    return Verdict(name, measured, target, se, "match", bool(abs(measured - target) <= SLACK * se))


@dataclass
class BoundReport:
    label: str
    spec: str
    kind: str
    rho: float
    eta: float
    n: int
    dw_tilde: metrics.DistanceEstimate
    dk_tilde: metrics.DistanceEstimate
    dw_hat: metrics.DistanceEstimate | None = None
    tilde_upper: float | None = None
    tilde_upper_se: float = 0.0
    hat_lower: float | None = None
    hat_upper: float | None = None
    coupling_bound: transforms.Estimate | None = None
    generator_ceiling: float | None = None
    brown: BrownCeiling | None = None
    exact_dw_tilde: float | None = None
    ladder: LadderStats | None = None
    verdicts: list[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _verify_mg1(q: QueueSpec, n: int, replicates: int, seed: int) -> BoundReport:
    m = q.service.moments()
    raw = simulate.geometric_convolution_sample(q, n, seed=seed, replicates=replicates)
    tilde = simulate.rescale(raw, q, "tilde")
    hat = simulate.rescale(raw, q, "hat")
    dw_t = metrics.wasserstein_vs_cdf(tilde)
    dw_h = metrics.wasserstein_vs_cdf(hat)
    dk_t = metrics.kolmogorov_vs_cdf(tilde)
    b = bound_mg1(m, q.rho)
    p, mu, mu2 = mg1_geo_parameters(m, q.rho)
    brown = bound_brown_kolmogorov(q.rho, mu, mu2)
    pair = transforms.couple_geometric(p, residual(q.service), n, seed=seed, replicates=replicates)
    cb = transforms.coupling_gap_bound(pair)

    rep = BoundReport(q.label, q.describe(), "M/G/1", q.rho, q.rho, n, dw_t, dk_t, dw_h,
                      tilde_upper=b.tilde_upper, hat_lower=b.hat_lower, hat_upper=b.hat_upper,
                      coupling_bound=cb, generator_ceiling=b.tilde_upper, brown=brown)
    v = rep.verdicts
    v.append(_upper("dW(tilde) <= tilde bound", dw_t.estimate, b.tilde_upper, dw_t.se))
    v.append(_lower("dW(hat) >= 1 - rho", dw_h.estimate, b.hat_lower, dw_h.se))
    v.append(_upper("dW(hat) <= hat bound", dw_h.estimate, b.hat_upper, dw_h.se))
    tri_se = math.hypot(dw_h.se, q.rho * dw_t.se)
    v.append(_upper("triangle dW(hat) <= rho dW(tilde) + 1 - rho", dw_h.estimate,
                    q.rho * dw_t.estimate + (1.0 - q.rho), tri_se))
    v.append(_upper("dW(tilde) <= 2E|W - W^e|", dw_t.estimate, cb.value, math.hypot(dw_t.se, cb.se)))
    v.append(_match("2E|W - W^e| = tilde bound", cb.value, b.tilde_upper, cb.se))
    v.append(_upper("dK(tilde) <= Brown ceiling", dk_t.estimate, brown.exact_ceiling, dk_t.se))
    if q.service.family == "exp":
        rep.exact_dw_tilde = mm1_tilde_distance(q.rho)
        v.append(_match("dW(tilde) = M/M/1 quadrature", dw_t.estimate, rep.exact_dw_tilde, dw_t.se))
    return rep


def gg1_ceiling(ladder: LadderStats) -> tuple[float, float]:
    """E[Y1^2]/E[Y1]^2 (1 - eta)/eta and its delta-method standard error."""
    e, y1, y2 = ladder.eta, ladder.y1_mean, ladder.y1_sq_mean
    val = y2 / y1**2 * (1.0 - e) / e
    g_e = -y2 / (y1**2 * e**2)
    g_y1 = -2.0 * val / y1
    g_y2 = val / y2
    var = (g_e * ladder.eta_se) ** 2 + (g_y1 * ladder.y1_mean_se) ** 2 + (g_y2 * ladder.y1_sq_mean_se) ** 2 \
        + 2.0 * g_y1 * g_y2 * ladder.y1_cov
    return val, math.sqrt(max(var, 0.0))


def _verify_gg1(q: QueueSpec, n: int, replicates: int, seed: int, walks: int, horizon: int | None) -> BoundReport:
    horizon = horizon or simulate.default_horizon(q)
    ladder = simulate.ladder_decompose(q, walks, horizon, seed=seed)
    if ladder.ladder_points < 2:
        raise NumericalError("too few ladder points to estimate the G/G/1 scaling",
                             ladder_points=ladder.ladder_points)
    raw = simulate.lindley_sample(q, n, seed=seed, replicates=replicates)
    tilde = simulate.rescale(raw, q, "tilde", ladder=ladder)
    dw_t = metrics.wasserstein_vs_cdf(tilde)
    dk_t = metrics.kolmogorov_vs_cdf(tilde)
    ceiling, ceiling_se = gg1_ceiling(ladder)
    brown = bound_brown_kolmogorov(ladder.eta, ladder.y1_mean, ladder.y1_sq_mean)
    # the plug-in scale is itself uncertain: d_W(cW, c'W) = |c - c'| E[W]
    c, c_se = ladder.tilde_scale()
    scale_se = c_se * raw.mean()
    prop_se = math.sqrt(dw_t.se**2 + ceiling_se**2 + scale_se**2)
    rep = BoundReport(q.label, q.describe(), "G/G/1", q.rho, ladder.eta, n, dw_t, dk_t,
                      tilde_upper=ceiling, tilde_upper_se=ceiling_se, brown=brown, ladder=ladder)
    rep.verdicts.append(_upper("dW(tilde) <= plug-in ladder bound", dw_t.estimate, ceiling, prop_se))
    k_se = math.sqrt(dk_t.se**2 + (scale_se / max(raw.mean(), 1e-300)) ** 2)
    rep.verdicts.append(_upper("dK(tilde) <= Brown ceiling", dk_t.estimate, brown.exact_ceiling, k_se))
    return rep


def verify_spec(q: QueueSpec, n: int = 1_000_000, replicates: int = 16, seed: int = 0,
                walks: int = 20_000, horizon: int | None = None) -> BoundReport:
    """Measure d_W and d_K for the scaled stationary wait and check every applicable bound."""
    if q.is_mg1:
        return _verify_mg1(q, n, replicates, seed)
    return _verify_gg1(q, n, replicates, seed, walks, horizon)


# -- rate analysis ------------------------------------------------------------

@dataclass
class CFPoint:
    p: float
    t: float
    exact_deviation: float  # Re phi_W(t) - 1/(1+t^2)
    predicted: float  # p mu2 t^2 (t^2 - 1) / (2 mu^2 (1+t^2)^2)
    ratio: float | None


@dataclass
class RateFit:
    service: str
    rho_grid: list[float]
    distances: list[float]
    method: str
    slope: float
    intercept: float
    r2: float
    cf_points: list[CFPoint] = field(default_factory=list)


def geometric_cf(p: float, x_law: Distribution, t: float) -> complex:
    """phi_W(t) = p / (1 - (1 - p) phi_X(p t / (mu (1 - p)))) for W = p/(mu(1-p)) sum_{i<=N} X_i."""
    mu = x_law.mean
    inner = x_law.cf(p * t / (mu * (1.0 - p)))
    if inner is None:
        raise ConfigurationError(f"{x_law} has no closed-form characteristic function")
    return complex(p / (1.0 - (1.0 - p) * complex(inner)))


def cf_deviation(p: float, x_law: Distribution, t: float) -> CFPoint:
    mu, mu2 = x_law.mean, x_law.moment(2)
    exact = geometric_cf(p, x_law, t).real - 1.0 / (1.0 + t * t)
    predicted = p * mu2 * t * t * (t * t - 1.0) / (2.0 * mu**2 * (1.0 + t * t) ** 2)
    ratio = exact / predicted if predicted != 0.0 else None
    return CFPoint(p, t, exact, predicted, ratio)


def _check_grid(rho_grid) -> list[float]:
    grid = [float(r) for r in rho_grid]
    if len(grid) < 5:
        raise ConfigurationError(f"rate fit needs at least 5 loads, got {len(grid)}")
    if any(not 0.0 < r < 1.0 for r in grid):
        raise ConfigurationError(f"loads must lie in (0, 1): {grid}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigurationError(f"load grid must be strictly increasing: {grid}")
    return grid


def rate_fit(service: Distribution, rho_grid, n: int = 200_000, replicates: int = 16, seed: int = 0,
             method: str | None = None, cf_t=(0.5, 1.0)) -> RateFit:
    """Fit log d_W(W tilde, Z) against log(1 - rho) and compare the characteristic-function expansion.

    ``method`` is "exact" (M/M/1 quadrature, exponential service only) or
    "mc" (geometric-convolution samples); the default picks "exact" when
    it is available.
    """
    grid = _check_grid(rho_grid)
    if method is None:
        method = "exact" if service.family == "exp" else "mc"
    if method == "exact" and service.family != "exp":
        raise ConfigurationError("exact rate fit is available for exponential service only")
    dists = []
    for i, rho in enumerate(grid):
        if method == "exact":
            dists.append(mm1_tilde_distance(rho))
        else:
            q = QueueSpec.mg1(service, rho)
            s = simulate.rescale(simulate.geometric_convolution_sample(q, n, seed=(seed + i) % 2**64, replicates=replicates),
                                 q, "tilde")
            dists.append(metrics.wasserstein_vs_cdf(s).estimate)
    lx = np.log1p(-np.array(grid))
    ly = np.log(np.array(dists))
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    fit = RateFit(service.to_string(), grid, dists, method, float(slope), float(intercept), r2)
    x_law = residual(service)
    if x_law.has_cf:
        for rho in grid:
            for t in cf_t:
                fit.cf_points.append(cf_deviation(1.0 - rho, x_law, float(t)))
    return fit
