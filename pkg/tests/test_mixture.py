import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from skewparity.errors import ModelError, UndefinedSkewness
from skewparity.mixture import (
    MixtureModel,
    PortfolioDistribution,
    limit_skewness_zero_vol,
    mixture_density,
    mixture_moments,
    portfolio_distribution,
    portfolio_skewness,
    simulate_regimes,
    simulate_returns,
    to_period,
)

SINGLE = MixtureModel(0.25, [0.05], [[0.04]], [-0.40], [[0.04]])


def test_single_asset_skewness_value():
    assert portfolio_skewness(SINGLE, [1.0]) == pytest.approx(-0.663, abs=5e-4)


def test_skewness_independent_of_mu():
    other = MixtureModel(0.25, [0.30], [[0.04]], [-0.40], [[0.04]])
    assert portfolio_skewness(other, [1.0]) == portfolio_skewness(SINGLE, [1.0])


@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_skewness_zero_at_degenerate_lambda(lam, example1):
    assert abs(portfolio_skewness(example1.with_lambda(lam), [0.2, 0.2, 0.6])) <= 1e-12


def test_skewness_zero_when_portfolio_jump_mean_vanishes():
    m = MixtureModel.from_volatilities(
        0.3, [0.05, 0.05], [0.2, 0.2], [[1, 0.3], [0.3, 1]], [-0.2, 0.2], [0.1, 0.1], np.eye(2)
    )
    assert abs(portfolio_skewness(m, [0.5, 0.5])) <= 1e-12


def test_portfolio_skewness_matches_mixture_moments(example1):
    x = np.array([0.2, 0.2, 0.6])
    dist = portfolio_distribution(example1, x)
    assert mixture_moments(dist).skewness == pytest.approx(portfolio_skewness(example1, x), rel=1e-12)


def test_moments_by_numerical_integration(example2):
    dist = portfolio_distribution(example2, [0.5, 0.3, 0.2])
    lo, hi = -3.0, 3.0
    m0 = integrate.quad(lambda y: mixture_density(dist, y), lo, hi, epsabs=1e-13, limit=200)[0]
    m1 = integrate.quad(lambda y: y * mixture_density(dist, y), lo, hi, epsabs=1e-13, limit=200)[0]
    var = integrate.quad(lambda y: (y - m1) ** 2 * mixture_density(dist, y), lo, hi, epsabs=1e-13, limit=200)[0]
    m3 = integrate.quad(lambda y: (y - m1) ** 3 * mixture_density(dist, y), lo, hi, epsabs=1e-13, limit=200)[0]
    mom = mixture_moments(dist)
    assert m0 == pytest.approx(1.0, abs=1e-10)
    assert mom.mean == pytest.approx(m1, abs=1e-10)
    assert mom.variance == pytest.approx(var, rel=1e-8)
    assert mom.skewness == pytest.approx(m3 / var ** 1.5, rel=1e-7)


def test_zero_volatility_limit():
    lim = limit_skewness_zero_vol(SINGLE, [1.0])
    tiny = MixtureModel(0.25, [0.05], [[1e-14]], [-0.40], [[0.04]])
    assert portfolio_skewness(tiny, [1.0]) == pytest.approx(lim, rel=1e-9)


def test_undefined_skewness_raises():
    flat = MixtureModel(0.0, [0.0], [[0.0]], [0.0], [[1.0]])
    with pytest.raises(UndefinedSkewness):
        portfolio_skewness(flat, [1.0])


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(0.01, 0.99), jm=st.floats(-1.0, 1.0), jv=st.floats(0.0, 0.5), vol=st.floats(0.01, 0.5))
def test_skewness_sign_follows_jump_mean_when_rare(lam, jm, jv, vol):
    # for lambda <= 1/2 the third cumulant has the sign of the jump mean
    m = MixtureModel(min(lam, 0.5), [0.0], [[vol * vol]], [jm], [[jv * jv]])
    g = portfolio_skewness(m, [1.0])
    if jm > 1e-9:
        assert g >= 0.0
    elif jm < -1e-9:
        assert g <= 0.0
    else:
        assert abs(g) <= 1e-12


def test_model_validation():
    with pytest.raises(ModelError):
        MixtureModel(1.5, [0.0], [[0.04]], [0.0], [[0.0]])
    with pytest.raises(ModelError):
        MixtureModel(0.1, [0.0, 0.0], [[0.04, 0.0], [0.0, -0.01]], [0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(ModelError):
        MixtureModel(0.1, [0.0], [[0.04, 0.0]], [0.0], [[0.0]])
    with pytest.raises(ModelError):
        MixtureModel(0.1, [0.0, 0.0], [[0.04, 0.01], [0.0, 0.04]], [0.0, 0.0], np.zeros((2, 2)))
    with pytest.raises(ModelError):
        MixtureModel(0.1, [0.0, 0.0], np.zeros((2, 2)), [0.0, 0.0], np.zeros((2, 2)))


def test_model_arrays_are_frozen(example1):
    with pytest.raises(ValueError):
        example1.mu[0] = 1.0


def test_portfolio_distribution_fields(example1):
    x = np.array([0.2, 0.2, 0.6])
    d = portfolio_distribution(example1, x)
    assert d.pi1 == 0.75 and d.pi2 == 0.25
    assert d.mu1 == pytest.approx(x @ example1.mu)
    assert d.mu2 - d.mu1 == pytest.approx(x @ example1.mu_tilde)
    assert d.sigma1 == pytest.approx(math.sqrt(x @ example1.sigma @ x))
    assert d.sigma2 == pytest.approx(math.sqrt(x @ example1.sigma2 @ x))
    with pytest.raises(ModelError):
        portfolio_distribution(example1, [0.5, 0.5])
    with pytest.raises(ModelError):
        PortfolioDistribution(0.5, 0.0, -1.0, 0.5, 0.0, 1.0)


def test_to_period_scaling(weekly3):
    dt = 1.0 / 52
    p = to_period(weekly3, dt)
    np.testing.assert_allclose(p.mu, weekly3.mu * dt)
    np.testing.assert_allclose(p.sigma, weekly3.sigma * dt)
    np.testing.assert_array_equal(p.mu_tilde, weekly3.mu_tilde)
    assert p.lam == weekly3.lam
    assert to_period(weekly3.with_lambda(0.26), dt, scale_lambda=True).lam == pytest.approx(0.005)


def test_simulation_is_reproducible_and_consistent():
    a = simulate_returns(SINGLE, 1000, seed=3)
    b = simulate_returns(SINGLE, 1000, seed=3)
    np.testing.assert_array_equal(a.data, b.data)
    data, jumps = simulate_regimes(SINGLE, 200_000, seed=4)
    assert jumps.mean() == pytest.approx(0.25, abs=3 * math.sqrt(0.25 * 0.75 / 200_000))
    mom = mixture_moments(portfolio_distribution(SINGLE, [1.0]))
    assert data.mean() == pytest.approx(mom.mean, abs=4 * math.sqrt(mom.variance / 200_000))
    assert data.var() == pytest.approx(mom.variance, rel=0.02)
