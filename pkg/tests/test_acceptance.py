"""Acceptance criteria 1-10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated
in the terminal summary) or ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from steinqueue import bounds, metrics, rng, simulate, stein, transforms
from steinqueue.distributions import Deterministic, Exponential, parse_distribution, residual
from steinqueue.simulate import EmpiricalSample, QueueSpec

SEED = 20261014
FAMILIES = ["exp:1", "det:1", "erlang:2,2", "uniform:0,2", "hyperexp:0.5,2,0.5,0.6666666666666666"]
LOADS = [0.8, 0.9, 0.95]
LINES: list[str] = []


def record(k, passed, detail):
    line = f"criterion {k:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line, flush=True)
    return passed


@pytest.fixture(scope="module")
def matrix():
    t0 = time.perf_counter()
    reports = {}
    for fam in FAMILIES:
        for rho in LOADS:
            q = QueueSpec.mg1(parse_distribution(fam), rho, f"{fam}@{rho}")
            reports[(fam, rho)] = bounds.verify_spec(q, n=1_000_000, replicates=16, seed=SEED)
    return reports, time.perf_counter() - t0


def test_criterion_01_scaled_exponential_anchor():
    worst, ok = 0.0, True
    for rho in (0.5, 0.8, 0.95):
        t0 = time.perf_counter()
        z = rng.stream(SEED, "distributions", int(rho * 100)).exponential(size=1_000_000)
        d = metrics.wasserstein_vs_cdf(EmpiricalSample.from_values(rho * z, replicates=16))
        dt = time.perf_counter() - t0
        err = abs(d.estimate - (1 - rho))
        worst = max(worst, err)
        ok &= err <= 0.005 and dt < 10
    assert record(1, ok, f"max |d_W(rho Z, Z) - (1 - rho)| = {worst:.2e} (tol 5e-3)")


def test_criterion_02_mm1_tilde():
    ok, parts = True, []
    for rho in LOADS:
        t0 = time.perf_counter()
        quad = bounds.mm1_tilde_distance(rho)
        ceiling = 2 * (1 - rho) / rho
        q = QueueSpec.mg1(Exponential(1.0), rho)
        s = simulate.rescale(simulate.geometric_convolution_sample(q, 1_000_000, seed=SEED), q, "tilde")
        d = metrics.wasserstein_vs_cdf(s)
        dt = time.perf_counter() - t0
        z = abs(d.estimate - quad) / d.se
        ok &= quad <= ceiling and z <= 3 and dt < 30
        parts.append(f"rho={rho}: quad {quad:.5f} <= {ceiling:.4f}, MC {d.estimate:.5f} ({z:.2f} se)")
    assert record(2, ok, "; ".join(parts))


def test_criterion_03_hat_sandwich(matrix):
    reports, runtime = matrix
    bad = []
    for key, rep in reports.items():
        v = {x.name: x for x in rep.verdicts}
        if not (v["dW(hat) >= 1 - rho"].passed and v["dW(hat) <= hat bound"].passed):
            bad.append(f"{key[0]}@{key[1]}")
    ok = not bad and runtime < 600
    assert record(3, ok, f"{len(reports) - len(bad)}/{len(reports)} cells inside [1-rho, (1+C)(1-rho)] +- 3 se"
                         f", matrix runtime {runtime:.0f}s" + (f", failing: {bad}" if bad else ""))


def test_criterion_04_gg1_plug_in():
    t0 = time.perf_counter()
    q = QueueSpec.with_load(parse_distribution("erlang:2,1"), Exponential(1.0), 0.9, "E2/M/1")
    rep = bounds.verify_spec(q, n=1_000_000, replicates=16, seed=SEED, walks=20_000)
    dt = time.perf_counter() - t0
    v = rep.verdicts[0]
    lad = rep.ladder
    ses = (lad.eta_se, lad.y1_mean_se, lad.y1_sq_mean_se)
    ok = v.passed and all(math.isfinite(s) and s > 0 for s in ses) and dt < 300
    assert record(4, ok, f"d_W {v.measured:.4f} <= plug-in {v.bound:.4f} + 3*{v.se:.4f}; "
                         f"eta {lad.eta:.4f}+-{lad.eta_se:.4f}, E[Y1] {lad.y1_mean:.4f}+-{lad.y1_mean_se:.4f}, "
                         f"E[Y1^2] {lad.y1_sq_mean:.4f}+-{lad.y1_sq_mean_se:.4f}, {dt:.0f}s")


def test_criterion_05_coupling():
    t0 = time.perf_counter()
    ok, parts = True, []
    for law in (Exponential(1.0), Deterministic(1.0)):
        for p in (0.05, 0.1, 0.2):
            pair = transforms.couple_geometric(p, law, 1_000_000, seed=SEED)
            gap = transforms.coupling_gap_bound(pair)
            target = bounds.bound_geo(p, law.mean, law.moment(2))
            d = metrics.wasserstein_vs_cdf(pair.first_marginal())
            z = abs(gap.value - target) / gap.se
            dominates = d.estimate <= gap.value + 3 * math.hypot(gap.se, d.se if math.isfinite(d.se) else 0.0)
            ok &= z <= 3 and dominates
            parts.append(f"{law}@p={p}: {z:.2f} se, d_W {d.estimate:.4f} <= {gap.value:.4f}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    assert record(5, ok, "; ".join(parts) + f"; {dt:.0f}s")


def test_criterion_06_rate():
    t0 = time.perf_counter()
    fit = bounds.rate_fit(Exponential(1.0), [0.8, 0.9, 0.95, 0.98, 0.99], method="exact")
    cf = bounds.cf_deviation(0.01, residual(Exponential(1.0)), 0.5)
    dt = time.perf_counter() - t0
    ok = 0.95 <= fit.slope <= 1.05 and 0.9 <= cf.ratio <= 1.1 and dt < 60
    assert record(6, ok, f"slope {fit.slope:.4f} in [0.95, 1.05]; cf ratio {cf.ratio:.5f} in [0.9, 1.1]")


def test_criterion_07_stein_machinery():
    t0 = time.perf_counter()
    grid = np.linspace(0.0, 10.0, 1000)
    ok, worst_res, worst_z = True, 0.0, 0.0
    sols = {}
    for key, h in stein.BANK.items():
        sol = sols[key] = stein.solve_stein(h)
        res = float(np.max(np.abs(stein.ode_residual(sol, grid))))
        rep = stein.check_third_derivative_bound(sol, grid)
        worst_res = max(worst_res, res)
        ok &= res <= 1e-6 and rep.passed
    for fam in ("exp:1", "det:1"):
        q = QueueSpec.mg1(parse_distribution(fam), 0.9)
        s = simulate.rescale(simulate.geometric_convolution_sample(q, 100_000, seed=SEED), q, "tilde")
        for key, h in stein.BANK.items():
            g = stein.generator_comparison_error(q, h, s, sols[key])
            worst_z = max(worst_z, abs(g.stationarity_z))
            ok &= abs(g.stationarity) <= 5 * g.stationarity_se
    dt = time.perf_counter() - t0
    ok &= dt < 120
    assert record(7, ok, f"max ODE residual {worst_res:.1e}, f''' bounds hold, "
                         f"max |E[G f_h]|/se {worst_z:.2f} <= 5; {dt:.0f}s")


def test_criterion_08_generator_comparison():
    t0 = time.perf_counter()
    q = QueueSpec.mg1(Exponential(1.0), 0.9)
    s = simulate.rescale(simulate.geometric_convolution_sample(q, 100_000, seed=SEED), q, "tilde")
    ok, parts = True, []
    for key in ("x", "cos(0.5x)"):
        g = stein.generator_comparison_error(q, stein.BANK[key], s)
        ok &= g.passed
        parts.append(f"h={key}: {g.mean_abs:.3g} <= {g.ceiling:.4f}")
    dt = time.perf_counter() - t0
    ok &= dt < 120
    assert record(8, ok, "; ".join(parts) + f"; {dt:.0f}s")


def test_criterion_09_brown(matrix):
    reports, _ = matrix
    bad = []
    for key, rep in reports.items():
        v = next(x for x in rep.verdicts if x.name == "dK(tilde) <= Brown ceiling")
        if not v.passed:
            bad.append(f"{key[0]}@{key[1]} ({v.measured:.4f} > {v.bound:.4f})")
    assert record(9, not bad, f"{len(reports) - len(bad)}/{len(reports)} cells with d_K <= Brown ceiling + 3 se"
                              + (f"; failing: {', '.join(bad)}" if bad else ""))


def test_criterion_10_route_equivalence():
    worst, ok = 0.0, True
    for fam in FAMILIES:
        for rho in LOADS:
            q = QueueSpec.mg1(parse_distribution(fam), rho)
            a = simulate.lindley_sample(q, 100_000, seed=SEED, replicates=16)
            b = simulate.geometric_convolution_sample(q, 100_000, seed=SEED)
            k = metrics.kolmogorov_two_samples(a, b)
            worst = max(worst, k)
            ok &= k <= 0.02
    assert record(10, ok, f"max two-sample KS {worst:.4f} <= 0.02 over {len(FAMILIES) * len(LOADS)} cells")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
