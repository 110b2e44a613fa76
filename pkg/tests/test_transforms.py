import math

import numpy as np
import pytest
from scipy import integrate

from steinqueue import metrics, transforms
from steinqueue.distributions import Deterministic, Erlang, Exponential, HyperExponential, Uniform
from steinqueue.errors import ConfigurationError
from steinqueue.transforms import CoupledPair


def within(sample, target, k=5.0):
    return abs(sample.mean() - target) <= k * sample.mean_se()


def test_size_bias_exponential_is_gamma2():
    s = transforms.size_bias_sample(Exponential(1.0), 400_000, seed=1)
    oracle, _ = integrate.quad(lambda x: x * x * math.exp(-x), 0, np.inf)
    assert math.isclose(oracle, 2.0, rel_tol=1e-10)
    assert within(s, oracle)
    k = metrics.kolmogorov_vs_cdf(s, Erlang(2, 1.0)).estimate
    assert k < 0.01


def test_size_bias_point_mass():
    s = transforms.size_bias_sample(Deterministic(1.5), 1000, seed=2)
    assert np.all(s.values == 1.5)


def test_size_bias_uniform_mean():
    s = transforms.size_bias_sample(Uniform(0.0, 1.0), 400_000, seed=3)
    oracle, _ = integrate.quad(lambda x: 2 * x * x, 0, 1)
    assert within(s, oracle)


def test_equilibrium_exponential_fixed_point():
    s = transforms.equilibrium_sample(Exponential(1.0), 100_000, seed=4)
    assert metrics.kolmogorov_vs_cdf(s).estimate <= 0.01


def test_equilibrium_point_mass_is_uniform():
    s = transforms.equilibrium_sample(Deterministic(1.0), 100_000, seed=5)
    assert s.values.max() <= 1.0
    assert metrics.kolmogorov_vs_cdf(s, Uniform(0.0, 1.0)).estimate <= 0.01


@pytest.mark.parametrize("d", [Exponential(2.0), Erlang(3, 1.0), Uniform(0.5, 2.0),
                               HyperExponential((0.3, 0.7), (0.5, 3.0))], ids=str)
def test_equilibrium_mean(d):
    s = transforms.equilibrium_sample(d, 400_000, seed=6)
    assert within(s, d.moment(2) / (2 * d.mean))


@pytest.mark.parametrize("p", [0.05, 0.2, 0.5])
@pytest.mark.parametrize("law", [Exponential(1.0), Deterministic(1.0), Uniform(0.0, 2.0)], ids=str)
def test_coupled_gap_mean(p, law):
    pair = transforms.couple_geometric(p, law, 1_000_000, seed=7)
    gap = pair.w_e - pair.w
    assert np.all(gap >= 0)
    target = transforms.expected_gap(p, law)
    mu, mu2 = law.mean, law.moment(2)
    assert math.isclose(target, p / (1 - p) * mu2 / (2 * mu * mu), rel_tol=1e-12)
    assert abs(gap.mean() - target) <= 5 * gap.std(ddof=1) / math.sqrt(gap.size)


def test_coupled_first_marginal_has_unit_mean():
    pair = transforms.couple_geometric(0.1, Erlang(2, 1.0), 400_000, seed=8)
    assert within(pair.first_marginal(), 1.0)


def test_integer_sums_for_point_mass():
    pair = transforms.couple_geometric(0.5, Deterministic(1.0), 10_000, seed=9)
    k = pair.w / pair.scale
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)
    assert math.isclose(pair.scale, 1.0)


@pytest.mark.parametrize("name", list(transforms.RELATION_BANK))
def test_defining_relation(name):
    pair = transforms.couple_geometric(0.2, Exponential(1.0), 400_000, seed=10)
    est = transforms.defining_relation(pair, *transforms.RELATION_BANK[name])
    assert abs(est.value) <= 5 * est.se + 1e-12


def test_defining_relation_cubic_by_hand():
    pair = transforms.couple_geometric(0.1, Deterministic(1.0), 400_000, seed=11)
    lhs = np.mean(pair.w**2) / 2
    rhs = pair.w.mean() * pair.w_e.mean()
    est = transforms.defining_relation(pair, *transforms.RELATION_BANK["x^3/6"])
    assert math.isclose(est.value, lhs - rhs, rel_tol=1e-9, abs_tol=1e-12)
    assert abs(est.value) <= 5 * est.se


def test_identity_coupling_gives_zero_bound():
    z = np.random.default_rng(0).exponential(size=1000)
    bound = transforms.coupling_gap_bound(CoupledPair.identity(z))
    assert bound.value == 0.0 and bound.se == 0.0


def test_gap_bound_exponential_p02():
    pair = transforms.couple_geometric(0.2, Exponential(1.0), 1_000_000, seed=12)
    b = transforms.coupling_gap_bound(pair)
    assert abs(b.value - 0.5) <= 5 * b.se


@pytest.mark.parametrize("p,law", [(0.1, Exponential(1.0)), (0.2, Deterministic(1.0)),
                                   (0.05, Uniform(0.0, 2.0))], ids=str)
def test_gap_bound_dominates_distance(p, law):
    pair = transforms.couple_geometric(p, law, 400_000, seed=13)
    b = transforms.coupling_gap_bound(pair)
    d = metrics.wasserstein_vs_cdf(pair.first_marginal())
    assert d.estimate <= b.value + 3 * b.se


def test_coupling_rejects_bad_p():
    with pytest.raises(ConfigurationError):
        transforms.couple_geometric(1.0, Exponential(1.0), 10)
    with pytest.raises(ConfigurationError):
        CoupledPair(np.zeros(3), np.zeros(4), 0)
