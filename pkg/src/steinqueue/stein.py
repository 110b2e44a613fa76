"""Exponential Stein equation and the M/G/1 generator.

The Stein equation for Z ~ Exp(1) is

    f''(x) - f'(x) + f'(0) = h(x) - E[h(Z)],

with the solution normalised by f'(0) = 0:

    f'(x) = -int_0^inf (h(x + u) - E[h(Z)]) e^{-u} du.

Solutions are carried only through f' and f''. Functions of f itself (the
jump increments of the queue generator) are recovered by integrating f'.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .errors import NumericalError, UnsupportedRouteError
from .simulate import EmpiricalSample, QueueSpec

# e^{-U} at the truncation point; the neglected tail is at most
# (|h(x) - Eh| + L (U + 1)) e^{-U}.
TAIL_CUTOFF = 40.0
QUAD_TOL = 1e-9
FD_STEP = 1e-3

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TestFunction:
    name: str
    h: Evaluator
    lipschitz: float
    expected: float | None = None  # E[h(Z)] for Z ~ Exp(1), if known in closed form

    __test__ = False  # not a pytest class

    def __call__(self, x):
        return self.h(np.asarray(x, dtype=float))

    def mean_under_exp(self) -> float:
        if self.expected is not None:
            return self.expected
        val, err = integrate.quad(lambda t: float(self.h(np.array([t]))[0]) * math.exp(-t), 0.0, np.inf,
                                  epsabs=1e-13, epsrel=1e-13, limit=400)
        if err > 1e-10:
            raise NumericalError("E[h(Z)] quadrature did not converge", h=self.name, error=err)
        return val

    def lipschitz_violation(self, grid) -> float:
        """Largest |h(x)-h(y)|/|x-y| - L over neighbouring grid points (<= 0 means consistent)."""
        g = np.sort(np.asarray(grid, dtype=float))
        hv = self(g)
        slopes = np.abs(np.diff(hv)) / np.diff(g)
        return float(slopes.max() - self.lipschitz)

    def scaled(self, c: float) -> "TestFunction":
        e = None if self.expected is None else c * self.expected
        return TestFunction(f"{c:g}*{self.name}", lambda x, h=self.h: c * h(x), abs(c) * self.lipschitz, e)


def _soft_min(c: float, s: float) -> Evaluator:
    # c - s log(1 + e^{(c - x)/s}): smooth, 1-Lipschitz, -> min(x, c) as s -> 0
    return lambda x: c - s * np.logaddexp(0.0, (c - x) / s)


def _cos(t: float) -> TestFunction:
    return TestFunction(f"cos({t:g}x)", lambda x: np.cos(t * x), t, 1.0 / (1.0 + t * t))


BANK: dict[str, TestFunction] = {
    "x": TestFunction("x", lambda x: np.asarray(x, dtype=float) * 1.0, 1.0, 1.0),
    "cos(0.25x)": _cos(0.25),
    "cos(0.5x)": _cos(0.5),
    "cos(1x)": _cos(1.0),
    "1-exp(-x)": TestFunction("1-exp(-x)", lambda x: -np.expm1(-x), 1.0, 0.5),
    "softmin(x,1)": TestFunction("softmin(x,1)", _soft_min(1.0, 0.1), 1.0),
}


class SteinSolution:
    """f_h' by quadrature of the tail integral, f_h'' from the Stein equation."""

    def __init__(self, h: TestFunction, tol: float = QUAD_TOL):
        self.h = h
        self.tol = tol
        self.eh = h.mean_under_exp()

    def fprime(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        if flat.size == 0:
            return np.zeros(x.shape)

        def integrand(u):
            return (self.h(flat + u) - self.eh) * math.exp(-u)

        res, err, info = integrate.quad_vec(integrand, 0.0, TAIL_CUTOFF, epsabs=self.tol, epsrel=0.0,
                                            norm="max", limit=10_000, full_output=True)
        if not info.success or err > self.tol:
            raise NumericalError("Stein solution quadrature did not converge", h=self.h.name,
                                 error=float(err), intervals=info.intervals.shape[0])
        return (-res).reshape(x.shape)

    def fsecond(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.fprime(x) + self.h(x) - self.eh

    def tabulate(self, x_max: float, step: float = 5e-3) -> "TabulatedSolution":
        return TabulatedSolution(self, x_max, step)


class TabulatedSolution:
    """Cubic Hermite interpolant of f' on [0, x_max] using f'' as the slope data.

    Points outside the table fall back to direct quadrature. ``max_error``
    is the largest deviation from direct quadrature at the cell midpoints.
    """

    def __init__(self, solution: SteinSolution, x_max: float, step: float = 5e-3):
        self.solution = solution
        self.h = solution.h
        self.eh = solution.eh
        self.tol = solution.tol
        cells = max(int(math.ceil(x_max / step)), 2)
        nodes = np.linspace(0.0, cells * step, cells + 1)
        fp = solution.fprime(nodes)
        fs = fp + self.h(nodes) - self.eh
        self._spline = CubicHermiteSpline(nodes, fp, fs)
        self.x_max = float(nodes[-1])
        mids = 0.5 * (nodes[1:] + nodes[:-1])
        self.max_error = float(np.max(np.abs(self._spline(mids) - solution.fprime(mids))))

    def fprime(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self._spline(np.clip(x, 0.0, self.x_max))
        outside = (x > self.x_max) | (x < 0)
        if outside.any():
            out = np.array(out, copy=True)
            out[outside] = self.solution.fprime(x[outside])
        return out

    def fsecond(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.fprime(x) + self.h(x) - self.eh


def solve_stein(h: TestFunction, tol: float = QUAD_TOL) -> SteinSolution:
    return SteinSolution(h, tol)


# -- finite differences ---------------------------------------------------------

def richardson_derivative(g: Evaluator, x, step: float = FD_STEP) -> tuple[np.ndarray, np.ndarray]:
    """Derivative of g on x >= 0 with one Richardson step, plus an error estimate.

    Central differences where x >= 2*step, second-order forward differences
    below that (the stencil never leaves [0, inf)).
    """
    x = np.asarray(x, dtype=float)

    def d(hs):
        central = x >= 2 * step
        xs = np.concatenate([x - hs, x + hs, x, x + 2 * hs])
        vals = g(xs).reshape(4, -1)
        gm, gp, g0, g2 = vals
        return np.where(central, (gp - gm) / (2 * hs), (-3 * g0 + 4 * gp - g2) / (2 * hs))

    coarse, fine = d(step), d(step / 2)
    rich = (4 * fine - coarse) / 3
    return rich, np.abs(rich - fine)


def ode_residual(sol: SteinSolution, grid) -> np.ndarray:
    """f''(x) - f'(x) + f'(0) - (h(x) - E h(Z)), with f'' differentiated numerically from f'."""
    grid = np.asarray(grid, dtype=float)
    d2, _ = richardson_derivative(sol.fprime, grid)
    f0 = float(sol.fprime(np.zeros(1))[0])
    return d2 - sol.fprime(grid) + f0 - (sol.h(grid) - sol.eh)


@dataclass(frozen=True)
class ThirdDerivativeReport:
    h: str
    max_abs: float
    argmax: float
    bound: float
    fd_error: float
    passed: bool


def check_third_derivative_bound(sol: SteinSolution, grid) -> ThirdDerivativeReport:
    """Grid check of sup |f'''| <= 2 ||h'||, with the finite-difference error as slack."""
    grid = np.asarray(grid, dtype=float)
    d3, err = richardson_derivative(sol.fsecond, grid)
    i = int(np.argmax(np.abs(d3)))
    slack = float(err.max()) + 10 * sol.tol / FD_STEP
    bound = 2.0 * sol.h.lipschitz
    return ThirdDerivativeReport(sol.h.name, float(abs(d3[i])), float(grid[i]), bound, slack,
                                 bool(abs(d3[i]) <= bound + slack))


# -- M/G/1 generator --------------------------------------------------------------

def _service_range(q: QueueSpec):
    delta = q.delta
    upper = delta * q.service.upper_tail(1e-16)
    pts = [delta * p for p in q.service.breakpoints() if 0.0 < delta * p < upper]
    return delta, upper, pts


def mg1_generator_apply(q: QueueSpec, fprime: Evaluator, fsecond: Evaluator, x, tol: float = 1e-12) -> np.ndarray:
    """G f(x) = lambda int [f(x + delta s) - f(x)] dF(s) - delta f'(x) 1(x > 0).

    The increment f(x + delta s) - f(x) is the integral of f' over
    (x, x + delta s); exchanging the order of integration gives

        int [f(x + delta s) - f(x)] dF(s) = int_0^inf f'(x + u) P(delta S > u) du.

    The first two Taylor terms of f'(x + u) are integrated in closed form
    (they contribute delta E[S] f'(x) and delta^2 E[S^2] f''(x) / 2) and the
    remainder is integrated numerically, which keeps the quadrature on a
    quantity of size O(u^2).
    """
    if not q.is_mg1:
        raise UnsupportedRouteError("the M/G/1 generator needs Poisson arrivals")
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    lam = q.arrival_rate
    delta, upper, pts = _service_range(q)
    m = q.service.moments()
    f1, f2 = fprime(flat), fsecond(flat)
    sf = q.service.sf

    def integrand(u):
        return (fprime(flat + u) - f1 - u * f2) * float(sf(u / delta))

    rem, err, info = integrate.quad_vec(integrand, 0.0, upper, epsabs=tol, epsrel=0.0, norm="max",
                                        points=pts or None, limit=10_000, full_output=True)
    if not info.success:
        raise NumericalError("generator quadrature did not converge", error=float(err))
    jump = lam * (rem + delta * m.m1 * f1 + 0.5 * delta**2 * m.m2 * f2)
    drift = delta * f1 * (flat > 0)
    return (jump - drift).reshape(x.shape)


def comparison_constant(q: QueueSpec) -> float:
    """a = 2 / (lambda delta^2 E[S^2])."""
    return 2.0 / (q.arrival_rate * q.delta**2 * q.service.moment(2))


def remainder_ceiling(q: QueueSpec, lipschitz: float = 1.0) -> float:
    """a * (lambda delta^3 / 3) ||h'|| E[S^3]."""
    m = q.service.moments()
    return m.bound_constant * (1.0 - q.rho) / q.rho * lipschitz


@dataclass(frozen=True)
class GeneratorReport:
    spec: str
    h: str
    n: int
    mean_abs: float
    mean_abs_se: float
    max_abs: float
    ceiling: float
    stationarity: float  # mean of a * G f_h over the sample
    stationarity_se: float
    passed: bool

    @property
    def stationarity_z(self) -> float:
        return self.stationarity / self.stationarity_se if self.stationarity_se > 0 else 0.0


def _evaluators_for(h: TestFunction, sample: EmpiricalSample, q: QueueSpec, solution=None):
    if solution is None:
        solution = solve_stein(h)
    if isinstance(solution, SteinSolution):
        _, upper, _ = _service_range(q)
        solution = solution.tabulate(float(sample.values[-1]) + upper + 0.01)
    return solution


def generator_comparison_error(q: QueueSpec, h: TestFunction, sample: EmpiricalSample,
                               solution=None) -> GeneratorReport:
    """Pointwise a G f_h(x) - (f_h''(x) - f_h'(x)) over a tilde-scaled M/G/1 sample."""
    if not q.is_mg1:
        raise UnsupportedRouteError("generator comparison is defined for M/G/1 only")
    if sample.scaling != "tilde":
        raise UnsupportedRouteError(f"generator comparison needs a tilde-scaled sample, got {sample.scaling!r}")
    sol = _evaluators_for(h, sample, q, solution)
    x = sample.values
    a = comparison_constant(q)
    ag = a * mg1_generator_apply(q, sol.fprime, sol.fsecond, x)
    diff = ag - (sol.fsecond(x) - sol.fprime(x))
    absd = np.abs(diff)
    n = x.size
    ceiling = remainder_ceiling(q, h.lipschitz)
    se = float(absd.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    st_se = float(ag.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return GeneratorReport(q.label or q.describe(), h.name, n, float(absd.mean()), se, float(absd.max()),
                           ceiling, float(ag.mean()), st_se, bool(absd.mean() <= ceiling))
